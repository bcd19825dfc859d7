//! Periodogram band powers.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// One-sided periodogram of the mean-removed signal. Entry `k` is the power at
/// `k * fs / n` Hz.
pub fn periodogram(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Summed periodogram power over bins with `lo_hz <= f < hi_hz`.
pub fn band_power_from(pxx: &[f64], n: usize, fs_hz: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    pxx.iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * fs_hz / n as f64;
            f >= lo_hz && f < hi_hz
        })
        .map(|(_, p)| p)
        .sum()
}

pub fn band_power(x: &[f64], fs_hz: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    band_power_from(&periodogram(x), x.len(), fs_hz, lo_hz, hi_hz)
}
