//! Seeded semi-simulated EEG with muscle-artifact ground truth.
//!
//! Clean EEG is a spatial mixture of latent rhythm generators, each the sum of
//! four band-limited noise processes (delta, theta, alpha, beta). Muscle
//! activity is a handful of 20-70 Hz bursts under raised-cosine envelopes,
//! each projected onto a run of neighbouring channels.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filtering::{design_bandpass, filter_channel, BandpassSpec, BiquadCascade};
use crate::linalg::random_orthogonal;
use crate::recording::{default_labels, save_recording, Recording};

/// (low Hz, high Hz, RMS weight) of each rhythm band.
pub const EEG_BANDS: [(f64, f64, f64); 4] = [
    (1.0, 4.0, 1.0),
    (4.0, 8.0, 0.8),
    (8.0, 13.0, 1.2),
    (13.0, 30.0, 0.5),
];
pub const EMG_BAND_HZ: (f64, f64) = (20.0, 70.0);
pub const CLEAN_RMS_UV: f64 = 10.0;
/// Bound on the singular-value spread of the clean-EEG mixing matrix.
pub const MAX_MIXING_CONDITION: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub n_channels: usize,
    pub fs_hz: f64,
    pub duration_s: f64,
    /// RMS(artifact) / RMS(clean), measured where the artifact is non-zero.
    pub contamination_ratio: f64,
    pub n_bursts: usize,
    /// Number of neighbouring channels each burst reaches.
    pub burst_channels: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            n_channels: 19,
            fs_hz: 250.0,
            duration_s: 10.0,
            contamination_ratio: 1.0,
            n_bursts: 3,
            burst_channels: 6,
        }
    }
}

impl SimConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        SimConfig { seed, ..self }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.fs_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSimConfig(m));
        if self.n_channels == 0 {
            return bad("n_channels must be positive".into());
        }
        if !(self.fs_hz > 0.0 && self.fs_hz.is_finite()) {
            return Err(Error::InvalidSamplingRate(self.fs_hz));
        }
        // beta band and the lower half of the EMG band must sit below Nyquist
        if self.fs_hz / 2.0 <= EEG_BANDS[3].1.max(EMG_BAND_HZ.0 + 5.0) {
            return bad(format!("sampling rate {} Hz too low for the EEG bands", self.fs_hz));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {} s must be positive", self.duration_s));
        }
        if !(self.contamination_ratio > 0.0 && self.contamination_ratio.is_finite()) {
            return bad(format!(
                "contamination ratio {} must be positive",
                self.contamination_ratio
            ));
        }
        if self.n_samples() < 2 * self.n_channels {
            return bad(format!(
                "{} samples is fewer than twice the channel count",
                self.n_samples()
            ));
        }
        if self.n_bursts > 0 && self.burst_channels == 0 {
            return bad("burst_channels must be positive".into());
        }
        Ok(())
    }

    fn labels(&self) -> Vec<String> {
        default_labels(self.n_channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub clean: Recording,
    /// The artifact exactly as added, i.e. already rescaled.
    pub artifact: Recording,
    pub contaminated: Recording,
    /// Scalar applied to the raw artifact to hit the contamination ratio.
    pub artifact_scale: f64,
}

impl GroundTruth {
    /// Writes `<stem>_clean`, `<stem>_artifact` and `<stem>_contaminated`
    /// recording pairs.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref().to_string_lossy().into_owned();
        save_recording(&self.clean, format!("{stem}_clean"))?;
        save_recording(&self.artifact, format!("{stem}_artifact"))?;
        save_recording(&self.contaminated, format!("{stem}_contaminated"))
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn band_filter(lo: f64, hi: f64, fs: f64) -> Result<BiquadCascade> {
    design_bandpass(&BandpassSpec::new(lo, hi, BandpassSpec::DEFAULT_ORDER, fs)?)
}

fn rms(x: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = x
        .into_iter()
        .fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

pub fn gen_clean_eeg(cfg: &SimConfig) -> Result<Recording> {
    cfg.validate()?;
    let (c, n) = (cfg.n_channels, cfg.n_samples());
    let mut rng = rng_for(cfg.seed, 0);
    let filters = EEG_BANDS
        .iter()
        .map(|&(lo, hi, _)| band_filter(lo, hi, cfg.fs_hz))
        .collect::<Result<Vec<_>>>()?;

    let mut latent = Array2::<f64>::zeros((c, n));
    for mut row in latent.rows_mut() {
        for (filt, &(_, _, weight)) in filters.iter().zip(EEG_BANDS.iter()) {
            let band = filter_channel(filt, &gaussian(&mut rng, n))?;
            let scale = weight / rms(band.iter().copied()).max(f64::MIN_POSITIVE);
            for (dst, v) in row.iter_mut().zip(band) {
                *dst += scale * v;
            }
        }
    }

    // U diag(s) V^T with log-uniform singular values in [1, MAX_MIXING_CONDITION]
    let u = random_orthogonal(c, &mut rng);
    let v = random_orthogonal(c, &mut rng);
    let s = Array1::from_shape_simple_fn(c, || {
        MAX_MIXING_CONDITION.powf(rng.random_range(0.0..=1.0))
    });
    let mixing = (&u * &s).dot(&v.t());

    let mut data = mixing.dot(&latent);
    let scale = CLEAN_RMS_UV / rms(data.iter().copied()).max(f64::MIN_POSITIVE);
    data.mapv_inplace(|x| x * scale);
    Recording::new(cfg.labels(), cfg.fs_hz, data)
}

pub fn gen_emg_artifact(cfg: &SimConfig, shape: (usize, usize)) -> Result<Recording> {
    cfg.validate()?;
    let (c, n) = shape;
    if c == 0 || n < 2 {
        return Err(Error::InvalidSimConfig(format!("bad artifact shape {c}x{n}")));
    }
    let mut rng = rng_for(cfg.seed, 1);
    let hi = EMG_BAND_HZ.1.min(0.45 * cfg.fs_hz);
    let filt = band_filter(EMG_BAND_HZ.0, hi, cfg.fs_hz)?;
    let min_len = 6 * filt.sections.len() + 1;

    let mut data = Array2::<f64>::zeros((c, n));
    for _ in 0..cfg.n_bursts {
        let dur_s: f64 = rng.random_range(0.5..=2.0);
        // bursts longer than the recording are truncated to it
        let len = ((dur_s * cfg.fs_hz).round() as usize).clamp(min_len.min(n), n);
        let onset = rng.random_range(0..=n - len);
        let width = cfg.burst_channels.min(c);
        let first = rng.random_range(0..=c - width);
        let weights: Vec<f64> = (0..width).map(|_| rng.random_range(0.5..=1.5)).collect();
        let noise = gaussian(&mut rng, len);
        let burst = if len >= min_len {
            filter_channel(&filt, &noise)?
        } else {
            noise
        };
        for (t, v) in burst.iter().enumerate() {
            let env = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * (t as f64 + 0.5) / len as f64).cos());
            for (j, w) in weights.iter().enumerate() {
                data[[first + j, onset + t]] += w * env * v;
            }
        }
    }
    Recording::new(default_labels(c), cfg.fs_hz, data)
}

/// Rescales `artifact` so its RMS over its own support is `ratio` times the
/// clean RMS over that support, and adds it to `clean`.
pub fn mix(clean: &Recording, artifact: &Recording, ratio: f64) -> Result<GroundTruth> {
    if clean.data.dim() != artifact.data.dim() {
        return Err(Error::ShapeMismatch(format!(
            "clean {:?} vs artifact {:?}",
            clean.data.dim(),
            artifact.data.dim()
        )));
    }
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!("ratio {ratio} must be non-negative")));
    }
    let support: Vec<(f64, f64)> = clean
        .data
        .iter()
        .zip(artifact.data.iter())
        .filter(|(_, a)| **a != 0.0)
        .map(|(c, a)| (*c, *a))
        .collect();

    let artifact_scale = if support.is_empty() {
        if ratio > 0.0 {
            return Err(Error::InvalidArgument(
                "artifact is identically zero but the ratio is positive".into(),
            ));
        }
        0.0
    } else {
        if ratio == 0.0 {
            return Err(Error::InvalidArgument(
                "ratio 0 requires an all-zero artifact".into(),
            ));
        }
        let clean_rms = rms(support.iter().map(|p| p.0));
        let artifact_rms = rms(support.iter().map(|p| p.1));
        ratio * (clean_rms / artifact_rms)
    };

    let scaled = artifact.data.mapv(|a| a * artifact_scale);
    let contaminated = &clean.data + &scaled;
    Ok(GroundTruth {
        clean: clean.clone(),
        artifact: clean.with_data(scaled)?,
        contaminated: clean.with_data(contaminated)?,
        artifact_scale,
    })
}

/// Contamination ratio actually present in a ground truth, over the artifact's
/// support.
pub fn measured_ratio(gt: &GroundTruth) -> f64 {
    let pairs: Vec<(f64, f64)> = gt
        .clean
        .data
        .iter()
        .zip(gt.artifact.data.iter())
        .filter(|(_, a)| **a != 0.0)
        .map(|(c, a)| (*c, *a))
        .collect();
    rms(pairs.iter().map(|p| p.1)) / rms(pairs.iter().map(|p| p.0))
}

pub fn gen_ground_truth(cfg: &SimConfig) -> Result<GroundTruth> {
    let clean = gen_clean_eeg(cfg)?;
    let artifact = gen_emg_artifact(cfg, clean.data.dim())?;
    let ratio = if artifact.data.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        cfg.contamination_ratio
    };
    mix(&clean, &artifact, ratio)
}

/// `count` datasets with seeds `base_seed, base_seed + 1, ...`.
pub fn gen_dataset_batch(base_seed: u64, count: usize, cfg: &SimConfig) -> Result<Vec<GroundTruth>> {
    if count == 0 {
        return Err(Error::InvalidArgument("batch count must be at least 1".into()));
    }
    (0..count as u64)
        .into_par_iter()
        .map(|i| gen_ground_truth(&cfg.with_seed(base_seed.wrapping_add(i))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::band_power;
    use proptest::prelude::*;

    fn small() -> SimConfig {
        SimConfig {
            n_channels: 4,
            duration_s: 4.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = [
            SimConfig { contamination_ratio: 0.0, ..small() },
            SimConfig { n_channels: 0, ..small() },
            SimConfig { duration_s: 0.01, ..small() },
            SimConfig { fs_hz: 40.0, ..small() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn clean_is_deterministic_and_scaled() {
        let a = gen_clean_eeg(&small()).unwrap();
        let b = gen_clean_eeg(&small()).unwrap();
        assert_eq!(a, b);
        let rms_all = rms(a.data.iter().copied());
        assert!((rms_all - CLEAN_RMS_UV).abs() < 1e-9);
        assert_ne!(a, gen_clean_eeg(&small().with_seed(1)).unwrap());
    }

    #[test]
    fn zero_bursts_give_zero_artifact() {
        let cfg = SimConfig { n_bursts: 0, ..small() };
        let art = gen_emg_artifact(&cfg, (4, 1000)).unwrap();
        assert!(art.data.iter().all(|v| *v == 0.0));
        let gt = gen_ground_truth(&cfg).unwrap();
        assert_eq!(gt.contaminated, gt.clean);
    }

    #[test]
    fn long_bursts_are_truncated() {
        let cfg = SimConfig { duration_s: 0.4, n_channels: 2, ..SimConfig::default() };
        let art = gen_emg_artifact(&cfg, (2, 100)).unwrap();
        assert!(art.data.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn artifact_is_deterministic() {
        let a = gen_emg_artifact(&small(), (4, 1000)).unwrap();
        assert_eq!(a, gen_emg_artifact(&small(), (4, 1000)).unwrap());
    }

    #[test]
    fn mix_hits_ratio_and_is_exact_sum() {
        let gt = gen_ground_truth(&small()).unwrap();
        assert!((measured_ratio(&gt) - 1.0).abs() < 1e-9);
        assert_eq!(gt.contaminated.data, &gt.clean.data + &gt.artifact.data);
        let diff = &gt.contaminated.data - &gt.artifact.data;
        for (d, c) in diff.iter().zip(gt.clean.data.iter()) {
            assert!((d - c).abs() <= 1e-12 * CLEAN_RMS_UV * 10.0);
        }
    }

    #[test]
    fn mix_edge_cases() {
        let clean = gen_clean_eeg(&small()).unwrap();
        let zero = clean.with_data(Array2::zeros(clean.data.dim())).unwrap();
        let gt = mix(&clean, &zero, 0.0).unwrap();
        assert_eq!(gt.contaminated, clean);
        assert!(mix(&clean, &zero, 1.0).is_err());

        let art = gen_emg_artifact(&small(), clean.data.dim()).unwrap();
        assert!(mix(&clean, &art, 0.0).is_err());
        let one = mix(&clean, &art, 1.5).unwrap();
        let two = mix(&clean, &art, 3.0).unwrap();
        assert_eq!(two.artifact_scale, 2.0 * one.artifact_scale);
    }

    #[test]
    fn batch_seeds() {
        let cfg = small();
        let batch = gen_dataset_batch(10, 3, &cfg).unwrap();
        assert_eq!(batch.len(), 3);
        assert_eq!(batch[0], gen_ground_truth(&cfg.with_seed(10)).unwrap());
        let shifted = gen_dataset_batch(11, 2, &cfg).unwrap();
        assert_eq!(batch[1..], shifted[..]);
        assert_ne!(batch[0].clean, batch[1].clean);
        assert!(gen_dataset_batch(0, 0, &cfg).is_err());
    }

    #[test]
    fn spectral_content() {
        let cfg = SimConfig::default().with_seed(3);
        let clean = gen_clean_eeg(&cfg).unwrap();
        let art = gen_emg_artifact(&cfg, clean.data.dim()).unwrap();
        let fs = cfg.fs_hz;
        let (mut total, mut above40) = (0.0, 0.0);
        let mut bands = [0.0; 4];
        for row in clean.data.rows() {
            let x = row.to_vec();
            total += band_power(&x, fs, 0.0, fs);
            above40 += band_power(&x, fs, 40.0, fs);
            for (b, &(lo, hi, _)) in bands.iter_mut().zip(EEG_BANDS.iter()) {
                *b += band_power(&x, fs, lo, hi);
            }
        }
        assert!(above40 <= 0.05 * total);
        assert!(bands[2] >= bands[0] && bands[2] >= bands[1] && bands[2] >= bands[3]);

        let (mut a_total, mut a_low) = (0.0, 0.0);
        for row in art.data.rows() {
            let x = row.to_vec();
            a_total += band_power(&x, fs, 0.0, fs);
            a_low += band_power(&x, fs, 0.0, 15.0);
        }
        assert!(a_low <= 0.05 * a_total);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn ratio_invariant(ratio in 0.1f64..10.0, seed in 0u64..1000) {
            let cfg = SimConfig { contamination_ratio: ratio, seed, ..small() };
            let gt = gen_ground_truth(&cfg).unwrap();
            prop_assert!((measured_ratio(&gt) - ratio).abs() <= 1e-9 * ratio.max(1.0));
        }
    }
}
