//! Butterworth band-pass design and zero-phase application.
//!
//! The analog low-pass prototype is mapped to a band-pass with the standard
//! `s -> (s^2 + W0^2) / (s B)` substitution, then discretised by the bilinear
//! transform with both edges pre-warped. Poles are grouped in conjugate pairs
//! into second-order sections, each carrying one zero at `z = 1` and one at
//! `z = -1`.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::recording::Recording;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandpassSpec {
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    /// Order of the analog low-pass prototype; the band-pass has twice as many poles.
    pub order: usize,
    pub fs_hz: f64,
}

impl BandpassSpec {
    pub const DEFAULT_LOW_HZ: f64 = 1.0;
    pub const DEFAULT_HIGH_HZ: f64 = 70.0;
    pub const DEFAULT_ORDER: usize = 4;

    pub fn new(low_cut_hz: f64, high_cut_hz: f64, order: usize, fs_hz: f64) -> Result<Self> {
        let spec = BandpassSpec {
            low_cut_hz,
            high_cut_hz,
            order,
            fs_hz,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The default 1-70 Hz, order-4 EEG pre-filter at `fs_hz`.
    pub fn eeg(fs_hz: f64) -> Result<Self> {
        Self::new(
            Self::DEFAULT_LOW_HZ,
            Self::DEFAULT_HIGH_HZ,
            Self::DEFAULT_ORDER,
            fs_hz,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs_hz > 0.0 && self.fs_hz.is_finite()) {
            return Err(Error::InvalidSamplingRate(self.fs_hz));
        }
        if !(0.0 < self.low_cut_hz
            && self.low_cut_hz < self.high_cut_hz
            && self.high_cut_hz < self.fs_hz / 2.0)
        {
            return Err(Error::InvalidFilter(format!(
                "need 0 < low ({}) < high ({}) < fs/2 ({})",
                self.low_cut_hz,
                self.high_cut_hz,
                self.fs_hz / 2.0
            )));
        }
        if ![2, 4, 6, 8].contains(&self.order) {
            return Err(Error::InvalidFilter(format!(
                "order must be one of 2, 4, 6, 8; got {}",
                self.order
            )));
        }
        Ok(())
    }
}

/// `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub const IDENTITY: Biquad = Biquad {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    /// Poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z_inv2 = z_inv * z_inv;
        (self.b0 + z_inv * self.b1 + z_inv2 * self.b2) / (1.0 + z_inv * self.a1 + z_inv2 * self.a2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
}

impl BiquadCascade {
    pub fn identity() -> Self {
        BiquadCascade {
            sections: vec![Biquad::IDENTITY],
        }
    }

    /// Steady-state section states for a unit step, so that filtering a
    /// constant produces no start-up transient.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut level = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
                let z2 = (s.b2 - s.a2 * gain) * level;
                let z1 = (s.b1 - s.a1 * gain) * level + z2;
                level *= gain;
                [z1, z2]
            })
            .collect()
    }

    /// Causal transposed direct-form II pass, states initialised to the step
    /// response scaled by the first input sample.
    fn run(&self, x: &mut [f64], step_states: &[[f64; 2]]) {
        let Some(&x0) = x.first() else { return };
        for (s, zi) in self.sections.iter().zip(step_states) {
            let (mut z1, mut z2) = (zi[0] * x0, zi[1] * x0);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b0 * input + z1;
                z1 = s.b1 * input - s.a1 * y + z2;
                z2 = s.b2 * input - s.a2 * y;
                *v = y;
            }
        }
    }
}

pub fn design_bandpass(spec: &BandpassSpec) -> Result<BiquadCascade> {
    spec.validate()?;
    let n = spec.order;
    let fs2 = 2.0 * spec.fs_hz;
    let w1 = fs2 * (PI * spec.low_cut_hz / spec.fs_hz).tan();
    let w2 = fs2 * (PI * spec.high_cut_hz / spec.fs_hz).tan();
    let bw = w2 - w1;
    let w0_sq = w1 * w2;

    let mut upper: Vec<Complex64> = Vec::with_capacity(n);
    for k in 0..n {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let proto = Complex64::from_polar(1.0, theta);
        let half = proto * (bw / 2.0);
        let root = (half * half - w0_sq).sqrt();
        for s in [half + root, half - root] {
            let z = (fs2 + s) / (fs2 - s);
            if z.im > 0.0 {
                upper.push(z);
            }
        }
    }
    if upper.len() != n {
        return Err(Error::InvalidFilter(format!(
            "expected {n} conjugate pole pairs, found {}",
            upper.len()
        )));
    }
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.arg().total_cmp(&b.arg())));

    // unit gain at the digital image of the analog centre frequency
    let w_centre = 2.0 * (w0_sq.sqrt() / fs2).atan();
    let z_inv = Complex64::from_polar(1.0, -w_centre);
    let sections = upper
        .into_iter()
        .map(|p| {
            let mut sec = Biquad {
                b0: 1.0,
                b1: 0.0,
                b2: -1.0,
                a1: -2.0 * p.re,
                a2: p.norm_sqr(),
            };
            let g = 1.0 / sec.response(z_inv).norm();
            sec.b0 *= g;
            sec.b2 *= g;
            sec
        })
        .collect::<Vec<_>>();
    if let Some(bad) = sections.iter().find(|s| !s.is_stable()) {
        return Err(Error::InvalidFilter(format!("unstable section {bad:?}")));
    }
    Ok(BiquadCascade { sections })
}

/// Complex gain of the cascade at `f_hz`.
pub fn frequency_response(filt: &BiquadCascade, f_hz: f64, fs_hz: f64) -> Result<Complex64> {
    if !(0.0..=fs_hz / 2.0).contains(&f_hz) {
        return Err(Error::InvalidArgument(format!(
            "frequency {f_hz} outside [0, {}]",
            fs_hz / 2.0
        )));
    }
    let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f_hz / fs_hz);
    Ok(filt
        .sections
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv)))
}

/// Reflection padding length used on each side of a channel.
pub fn pad_len(filt: &BiquadCascade, n: usize) -> usize {
    // 3 * order * 3, one section per prototype order
    (9 * filt.sections.len()).min(n.saturating_sub(1))
}

/// Zero-phase filtering of one channel.
///
/// The channel is extended at both ends by odd reflection, run through the
/// cascade forwards then backwards, and separately backwards then forwards;
/// the two results are averaged so the output commutes exactly with time
/// reversal. Net phase is zero and the magnitude response is `|H|^2`.
pub fn filter_channel(filt: &BiquadCascade, x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n <= 6 * filt.sections.len() || n < 2 {
        return Err(Error::TooShort(format!(
            "{n} samples is too short for a {}-section filter",
            filt.sections.len()
        )));
    }
    let pad = pad_len(filt, n);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let zi = filt.step_states();
    let mut fb = ext.clone();
    filt.run(&mut fb, &zi);
    fb.reverse();
    filt.run(&mut fb, &zi);
    fb.reverse();

    let mut bf = ext;
    bf.reverse();
    filt.run(&mut bf, &zi);
    bf.reverse();
    filt.run(&mut bf, &zi);

    Ok(fb[pad..pad + n]
        .iter()
        .zip(&bf[pad..pad + n])
        .map(|(a, b)| 0.5 * (a + b))
        .collect())
}

pub fn apply_zero_phase(filt: &BiquadCascade, rec: &Recording) -> Result<Recording> {
    let (c, n) = rec.data.dim();
    let mut out = Array2::zeros((c, n));
    for (src, mut dst) in rec.data.rows().into_iter().zip(out.rows_mut()) {
        let y = filter_channel(filt, &src.to_vec())?;
        dst.assign(&ndarray::Array1::from(y));
    }
    rec.with_data(out)
}
