//! Filter, separate, flag muscle components, reject them and rebuild the EEG.

use std::time::Instant;

use ndarray::{Array2, Axis};
use serde::Serialize;

use crate::bss::{
    cca_bss, extract_sources, fastica, iva, sobi, DemixingModel, FastIcaConfig, IvaConfig, Method,
    SobiConfig, SourceSet,
};
use crate::error::{Error, Result};
use crate::filtering::{apply_zero_phase, design_bandpass, BandpassSpec};
use crate::recording::{concatenate, segment, Recording, SegmentPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentifyConfig {
    /// Sources whose lag-1 autocorrelation falls below this are rejected.
    pub autocorr_threshold: f64,
    /// Sources whose 30-70 Hz / 1-30 Hz power ratio exceeds this are rejected.
    pub band_ratio_threshold: f64,
    /// At most this fraction of the sources is rejected.
    pub max_reject_fraction: f64,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig {
            autocorr_threshold: 0.90,
            band_ratio_threshold: 1.0,
            max_reject_fraction: 0.5,
        }
    }
}

impl IdentifyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.autocorr_threshold > 0.0 && self.autocorr_threshold < 1.0) {
            return bad(format!(
                "autocorrelation threshold {} must lie in (0, 1)",
                self.autocorr_threshold
            ));
        }
        if !(self.band_ratio_threshold > 0.0 && self.band_ratio_threshold.is_finite()) {
            return bad(format!(
                "band ratio threshold {} must be positive",
                self.band_ratio_threshold
            ));
        }
        if !(self.max_reject_fraction > 0.0 && self.max_reject_fraction <= 1.0) {
            return bad(format!(
                "rejection cap {} must lie in (0, 1]",
                self.max_reject_fraction
            ));
        }
        Ok(())
    }

    pub fn max_rejected(&self, n_sources: usize) -> usize {
        (self.max_reject_fraction * n_sources as f64 + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub method: Method,
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    pub filter_order: usize,
    pub identify: IdentifyConfig,
    pub seed: u64,
    /// Number of consecutive segments IVA treats as separate data sets.
    pub iva_segments: usize,
    pub sobi: SobiConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            method: Method::Iva,
            low_cut_hz: BandpassSpec::DEFAULT_LOW_HZ,
            high_cut_hz: BandpassSpec::DEFAULT_HIGH_HZ,
            filter_order: BandpassSpec::DEFAULT_ORDER,
            identify: IdentifyConfig::default(),
            seed: 0,
            iva_segments: 4,
            sobi: SobiConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_method(self, method: Method) -> Self {
        PipelineConfig { method, ..self }
    }

    pub fn bandpass(&self, fs_hz: f64) -> Result<BandpassSpec> {
        BandpassSpec::new(self.low_cut_hz, self.high_cut_hz, self.filter_order, fs_hz)
    }

    /// Checks everything that does not depend on the recording.
    pub fn validate(&self) -> Result<()> {
        self.identify.validate()?;
        if self.method == Method::Iva && self.iva_segments < 2 {
            return Err(Error::InvalidArgument("IVA requires multiple data sets".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub lag1_autocorr: Vec<Vec<f64>>,
    pub band_ratio: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub method: Method,
    pub engine: &'static str,
    pub n_channels: usize,
    pub n_datasets: usize,
    pub segment_len: usize,
    /// Trailing samples not covered by whole IVA segments.
    pub dropped_samples: usize,
    pub identify: IdentifyConfig,
    /// Rejected source indices per data set.
    pub rejected: Vec<Vec<usize>>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
    pub timings_ms: Vec<StageTiming>,
    pub total_ms: f64,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Flags muscle sources: low lag-1 autocorrelation or a high muscle/brain
/// band ratio. Diagnostics are averaged over data sets, so with several data
/// sets a source component vector is rejected everywhere or nowhere.
pub fn identify_muscle_components(srcs: &SourceSet, cfg: &IdentifyConfig) -> Vec<Vec<usize>> {
    let k = srcs.n_datasets();
    let c = srcs.n_sources();
    let mean = |table: &[Vec<f64>], n: usize| table.iter().map(|row| row[n]).sum::<f64>() / k as f64;
    let mut flagged: Vec<(usize, f64)> = (0..c)
        .map(|n| (n, mean(&srcs.lag1_autocorr, n), mean(&srcs.band_ratio, n)))
        .filter(|&(_, r, b)| r < cfg.autocorr_threshold || b > cfg.band_ratio_threshold)
        .map(|(n, _, b)| (n, b))
        .collect();
    let cap = cfg.max_rejected(c);
    if flagged.len() > cap {
        flagged.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        flagged.truncate(cap);
    }
    let mut rejected: Vec<usize> = flagged.into_iter().map(|(n, _)| n).collect();
    rejected.sort_unstable();
    vec![rejected; k]
}

/// Zeroes the rejected sources and maps the rest back to channel space,
/// restoring the whitening mean.
pub fn reconstruct_clean(
    model: &DemixingModel,
    srcs: &SourceSet,
    rejected: &[Vec<usize>],
) -> Result<Vec<Recording>> {
    let k_count = srcs.n_datasets();
    if model.n_datasets() != k_count || rejected.len() != k_count {
        return Err(Error::ShapeMismatch(format!(
            "{} models, {k_count} source sets, {} rejection sets",
            model.n_datasets(),
            rejected.len()
        )));
    }
    (0..k_count)
        .map(|k| {
            let mut s = srcs.sources[k].clone();
            for &n in &rejected[k] {
                if n >= s.nrows() {
                    return Err(Error::InvalidArgument(format!(
                        "source index {n} out of range (0..{})",
                        s.nrows()
                    )));
                }
                s.row_mut(n).fill(0.0);
            }
            let z = srcs.mixing[k].dot(&s);
            let data = model.whiten[k].inverse_transform(z.view());
            Recording::new(srcs.labels.clone(), srcs.fs_hz, data)
        })
        .collect()
}

/// Everything a pipeline run produces before the final reconstruction.
struct Separation {
    filtered: Recording,
    parts: Vec<Recording>,
    plan: SegmentPlan,
    model: DemixingModel,
    sources: SourceSet,
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timings.push(StageTiming {
        stage,
        ms: start.elapsed().as_secs_f64() * 1e3,
    });
    Ok(out)
}

fn separate(rec: &Recording, cfg: &PipelineConfig, timings: &mut Vec<StageTiming>) -> Result<Separation> {
    let filtered = timed(timings, "filter", || {
        let filt = design_bandpass(&cfg.bandpass(rec.fs_hz)?)?;
        apply_zero_phase(&filt, rec)
    })?;

    let (parts, plan) = timed(timings, "segment", || {
        if cfg.method != Method::Iva {
            return Ok((vec![filtered.clone()], SegmentPlan::new(1, filtered.n_samples())));
        }
        let plan = SegmentPlan::even(&filtered, cfg.iva_segments);
        if plan.validate_for(&filtered).is_err() {
            return Err(Error::TooShortForSegments {
                segments: cfg.iva_segments,
                samples: filtered.n_samples(),
                min_len: 2 * filtered.n_channels(),
            });
        }
        Ok((segment(&filtered, plan)?, plan))
    })?;

    let model = timed(timings, "separate", || match cfg.method {
        Method::Sobi => sobi(&parts[0], &cfg.sobi),
        Method::Ica => fastica(
            &parts[0],
            &FastIcaConfig {
                seed: cfg.seed,
                ..FastIcaConfig::default()
            },
        ),
        Method::Cca => cca_bss(&parts[0]),
        Method::Iva => iva(
            &parts,
            &IvaConfig {
                seed: cfg.seed,
                sobi: cfg.sobi.clone(),
                ..IvaConfig::default()
            },
        ),
    })?;

    let sources = timed(timings, "extract", || extract_sources(&model, &parts))?;
    Ok(Separation {
        filtered,
        parts,
        plan,
        model,
        sources,
    })
}

/// The full chain. With `override_rejected` the identification stage is
/// replaced by the given index sets.
fn run(
    rec: &Recording,
    cfg: &PipelineConfig,
    override_rejected: Option<Vec<Vec<usize>>>,
) -> Result<(Recording, PipelineReport)> {
    let start = Instant::now();
    rec.validate()?;
    cfg.validate()?;
    let mut timings = Vec::new();
    let sep = separate(rec, cfg, &mut timings)?;

    let rejected = timed(&mut timings, "identify", || {
        Ok(override_rejected.unwrap_or_else(|| identify_muscle_components(&sep.sources, &cfg.identify)))
    })?;
    let cleaned = timed(&mut timings, "reconstruct", || {
        let parts = reconstruct_clean(&sep.model, &sep.sources, &rejected)?;
        concatenate(&parts)
    })?;
    debug_assert_eq!(sep.parts.len(), sep.plan.n_segments);

    let report = PipelineReport {
        method: cfg.method,
        engine: cfg.method.engine(),
        n_channels: rec.n_channels(),
        n_datasets: sep.plan.n_segments,
        segment_len: sep.plan.segment_len,
        dropped_samples: sep.filtered.n_samples() - sep.plan.covered(),
        identify: cfg.identify,
        rejected,
        diagnostics: Diagnostics {
            lag1_autocorr: sep.sources.lag1_autocorr.clone(),
            band_ratio: sep.sources.band_ratio.clone(),
        },
        warnings: sep.model.warnings.clone(),
        timings_ms: timings,
        total_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((cleaned, report))
}

/// Filters `rec`, separates it with `cfg.method`, rejects the components
/// flagged as muscle activity and returns the reconstruction. For IVA the
/// output covers whole segments only; the dropped tail is in the report.
pub fn remove_artifacts(rec: &Recording, cfg: &PipelineConfig) -> Result<(Recording, PipelineReport)> {
    run(rec, cfg, None)
}

/// As [`remove_artifacts`] but rejecting exactly `rejected` (one index set per
/// data set) instead of running identification.
pub fn remove_with_rejection(
    rec: &Recording,
    cfg: &PipelineConfig,
    rejected: Vec<Vec<usize>>,
) -> Result<(Recording, PipelineReport)> {
    run(rec, cfg, Some(rejected))
}

/// The band-passed input restricted to the samples the pipeline output
/// covers, for comparing against its output.
pub fn filtered_support(rec: &Recording, cfg: &PipelineConfig, report: &PipelineReport) -> Result<Recording> {
    let filt = design_bandpass(&cfg.bandpass(rec.fs_hz)?)?;
    let filtered = apply_zero_phase(&filt, rec)?;
    truncate(&filtered, report.n_datasets * report.segment_len)
}

/// The first `n` samples of `rec`.
pub fn truncate(rec: &Recording, n: usize) -> Result<Recording> {
    if n > rec.n_samples() {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {n} of {} samples",
            rec.n_samples()
        )));
    }
    rec.with_data(rec.data.slice(ndarray::s![.., ..n]).to_owned())
}

/// Mean-removed energy of a recording.
pub fn centered_energy(rec: &Recording) -> f64 {
    let mean = rec.data.mean_axis(Axis(1)).expect("non-empty");
    let centered: Array2<f64> = &rec.data - &mean.insert_axis(Axis(1));
    centered.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bss::testutil::rec;
    use crate::linalg::frobenius;
    use crate::semisim::{gen_ground_truth, SimConfig};
    use ndarray::Array1;
    use std::f64::consts::PI;

    fn sine(f: f64, n: usize) -> Array1<f64> {
        Array1::from_shape_fn(n, |t| (2.0 * PI * f * t as f64 / 250.0).sin())
    }

    fn source_set(rows: &[Array1<f64>]) -> SourceSet {
        let c = rows.len();
        let n = rows[0].len();
        let mut data = Array2::zeros((c, n));
        for (i, r) in rows.iter().enumerate() {
            data.row_mut(i).assign(r);
        }
        let model = sobi(&rec(data.clone()), &SobiConfig::default()).unwrap();
        extract_sources(&model, &[rec(data)]).unwrap()
    }

    fn muscle_noise(n: usize) -> Array1<f64> {
        let cfg = SimConfig { n_channels: 1, ..SimConfig::default() };
        let filt = design_bandpass(&BandpassSpec::new(30.0, 70.0, 4, 250.0).unwrap()).unwrap();
        let noise = crate::bss::testutil::gaussian_sources(1, n, cfg.seed).row(0).to_vec();
        Array1::from(crate::filtering::filter_channel(&filt, &noise).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(IdentifyConfig::default().validate().is_ok());
        for bad in [
            IdentifyConfig { autocorr_threshold: 1.0, ..Default::default() },
            IdentifyConfig { band_ratio_threshold: 0.0, ..Default::default() },
            IdentifyConfig { max_reject_fraction: 0.0, ..Default::default() },
            IdentifyConfig { max_reject_fraction: 1.5, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
        assert_eq!(IdentifyConfig::default().max_rejected(19), 9);
    }

    #[test]
    fn rhythms_are_kept_and_muscle_rejected() {
        let n = 5000;
        let set = source_set(&[sine(10.0, n), sine(6.0, n) * 0.5 + sine(3.0, n), muscle_noise(n)]);
        let rejected = identify_muscle_components(&set, &IdentifyConfig::default());
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].len(), 1);
        let idx = rejected[0][0];
        assert!(set.lag1_autocorr[0][idx] < 0.9);
        assert!(set.band_ratio[0][idx] > 1.0);
    }

    #[test]
    fn all_rhythmic_rejects_nothing() {
        let n = 5000;
        let set = source_set(&[sine(10.0, n), sine(4.0, n) + sine(7.0, n) * 0.3]);
        assert_eq!(identify_muscle_components(&set, &IdentifyConfig::default()), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn cap_keeps_worst_band_ratio() {
        let n = 5000;
        let set = source_set(&[muscle_noise(n), sine(10.0, n) + sine(50.0, n) * 0.3, sine(10.0, n) * 0.1 + sine(45.0, n)]);
        let cfg = IdentifyConfig { max_reject_fraction: 0.34, ..Default::default() };
        let rejected = identify_muscle_components(&set, &cfg);
        assert_eq!(rejected[0].len(), 1);
        let worst = (0..3).max_by(|&a, &b| set.band_ratio[0][a].total_cmp(&set.band_ratio[0][b])).unwrap();
        assert_eq!(rejected[0], vec![worst]);
    }

    fn small_truth() -> crate::semisim::GroundTruth {
        gen_ground_truth(&SimConfig { n_channels: 8, duration_s: 8.0, seed: 4, ..SimConfig::default() }).unwrap()
    }

    #[test]
    fn empty_rejection_is_identity() {
        let gt = small_truth();
        for method in Method::ALL {
            let cfg = PipelineConfig::default().with_method(method);
            let k = if method == Method::Iva { cfg.iva_segments } else { 1 };
            let (out, report) = remove_with_rejection(&gt.contaminated, &cfg, vec![vec![]; k]).unwrap();
            let reference = filtered_support(&gt.contaminated, &cfg, &report).unwrap();
            let err = frobenius(&(&out.data - &reference.data)) / frobenius(&reference.data);
            assert!(err <= 1e-6, "{method}: {err}");
        }
    }

    #[test]
    fn total_rejection_gives_channel_means() {
        let gt = small_truth();
        let cfg = PipelineConfig {
            identify: IdentifyConfig { max_reject_fraction: 1.0, ..Default::default() },
            ..PipelineConfig::default().with_method(Method::Sobi)
        };
        let all: Vec<usize> = (0..8).collect();
        let (out, report) = remove_with_rejection(&gt.contaminated, &cfg, vec![all]).unwrap();
        let filtered = filtered_support(&gt.contaminated, &cfg, &report).unwrap();
        for (o, f) in out.data.rows().into_iter().zip(filtered.data.rows()) {
            let mean = f.mean().unwrap();
            assert!(o.iter().all(|v| (v - mean).abs() < 1e-9));
        }
    }

    #[test]
    fn out_of_range_index() {
        let gt = small_truth();
        let cfg = PipelineConfig::default().with_method(Method::Cca);
        let err = remove_with_rejection(&gt.contaminated, &cfg, vec![vec![8]]).unwrap_err();
        assert!(err.to_string().starts_with("reconstruct:"));
    }

    #[test]
    fn removal_improves_contaminated_input() {
        let gt = small_truth();
        let base = crate::metrics::rmse(&gt.clean, &gt.contaminated).unwrap();
        let (out, _) = remove_artifacts(&gt.contaminated, &PipelineConfig::default()).unwrap();
        let clean = truncate(&gt.clean, out.n_samples()).unwrap();
        assert!(crate::metrics::rmse(&clean, &out).unwrap() < base);
    }

    #[test]
    fn iva_segments_share_rejections_and_drop_tail() {
        let gt = gen_ground_truth(&SimConfig { n_channels: 6, duration_s: 8.01, seed: 2, ..SimConfig::default() }).unwrap();
        let (out, report) = remove_artifacts(&gt.contaminated, &PipelineConfig::default()).unwrap();
        assert_eq!(report.n_datasets, 4);
        assert_eq!(report.dropped_samples, gt.contaminated.n_samples() % 4);
        assert_eq!(out.n_samples(), 4 * report.segment_len);
        assert!(report.rejected.windows(2).all(|w| w[0] == w[1]));
        assert!(report.rejected[0].len() <= 3);
    }

    #[test]
    fn short_recording_for_iva() {
        let gt = gen_ground_truth(&SimConfig { n_channels: 8, duration_s: 0.2, ..SimConfig::default() }).unwrap();
        let err = remove_artifacts(&gt.contaminated, &PipelineConfig::default()).unwrap_err();
        assert!(err.to_string().contains("recording too short for 4 segments"), "{err}");
    }

    #[test]
    fn report_json_and_timings() {
        let gt = small_truth();
        let (_, report) = remove_artifacts(&gt.contaminated, &PipelineConfig::default().with_method(Method::Ica)).unwrap();
        let stages: f64 = report.timings_ms.iter().map(|t| t.ms).sum();
        assert!(stages <= report.total_ms * 1.0001);
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["method"], "ica");
        assert_eq!(json["engine"], "fastica");
        assert!(json["timings_ms"].as_array().unwrap().len() >= 5);
    }
}
