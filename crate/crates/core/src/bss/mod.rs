//! Blind source separation engines and the source bookkeeping shared by the
//! artifact pipeline.
//!
//! Every engine works on whitened data: `W_k` maps whitened samples of data
//! set `k` to sources and `A_k = W_k^{-1}` maps them back. Outputs follow one
//! convention so later stages can treat methods alike: sources are ordered by
//! descending lag-1 autocorrelation, and each source is signed so that the
//! largest-magnitude entry of its channel-space mixing column is positive.

mod cca;
mod fastica;
mod iva;
mod sobi;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

pub use cca::{cca, cca_bss, CanonicalCorrelation};
pub use fastica::{fastica, FastIcaConfig, Nonlinearity};
pub use iva::{iva, IvaConfig};
pub use sobi::{sobi, SobiConfig, DEFAULT_LAGS};

use crate::error::{Error, Result};
use crate::linalg::{column_signs, inverse, WhitenModel};
use crate::recording::Recording;
use crate::spectrum::{band_power_from, periodogram};

/// Separation method. Ordering is alphabetical by tag, which is also the row
/// order of comparison tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cca,
    Ica,
    Iva,
    Sobi,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Iva, Method::Ica, Method::Cca, Method::Sobi];

    /// Short tag used on the command line and in tables.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Cca => "cca",
            Method::Ica => "ica",
            Method::Iva => "iva",
            Method::Sobi => "sobi",
        }
    }

    /// Name of the engine behind the method.
    pub fn engine(self) -> &'static str {
        match self {
            Method::Ica => "fastica",
            other => other.tag(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iva" => Ok(Method::Iva),
            "ica" | "fastica" => Ok(Method::Ica),
            "cca" => Ok(Method::Cca),
            "sobi" => Ok(Method::Sobi),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected one of iva, ica, cca, sobi)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemixingModel {
    pub method: Method,
    /// Whitened-domain demixing matrix per data set.
    pub per_dataset_w: Vec<Array2<f64>>,
    /// `A_k = W_k^{-1}`.
    pub per_dataset_a: Vec<Array2<f64>>,
    pub whiten: Vec<WhitenModel>,
    pub warnings: Vec<String>,
    /// CCA only: canonical correlations, descending.
    pub canonical_correlations: Option<Vec<f64>>,
    /// IVA only: cost after initialization and after every accepted step.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
}

impl DemixingModel {
    fn single(method: Method, w: Array2<f64>, a: Array2<f64>, whiten: WhitenModel) -> Self {
        DemixingModel {
            method,
            per_dataset_w: vec![w],
            per_dataset_a: vec![a],
            whiten: vec![whiten],
            warnings: Vec::new(),
            canonical_correlations: None,
            cost_history: Vec::new(),
            iterations: 0,
        }
    }

    pub fn n_datasets(&self) -> usize {
        self.per_dataset_w.len()
    }

    pub fn n_sources(&self) -> usize {
        self.per_dataset_w[0].nrows()
    }

    /// Channel-space demixing `W_k V_k` (applied to mean-removed data).
    pub fn full_demixing(&self, k: usize) -> Array2<f64> {
        self.per_dataset_w[k].dot(&self.whiten[k].v)
    }

    /// Channel-space mixing `V_k^{-1} A_k`.
    pub fn full_mixing(&self, k: usize) -> Array2<f64> {
        self.whiten[k].v_inv.dot(&self.per_dataset_a[k])
    }
}

/// Sources of every data set with their scaled mixing matrices and the
/// per-source diagnostics used to spot muscle activity.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    pub sources: Vec<Array2<f64>>,
    /// Demixing rows divided by the source standard deviation.
    pub demixing: Vec<Array2<f64>>,
    /// Mixing columns multiplied by the source standard deviation, so that
    /// `mixing[k] . sources[k]` is the whitened data.
    pub mixing: Vec<Array2<f64>>,
    /// `[k][n]`: lag-1 autocorrelation of source `n` in data set `k`.
    pub lag1_autocorr: Vec<Vec<f64>>,
    /// `[k][n]`: power in 30-70 Hz over power in 1-30 Hz.
    pub band_ratio: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub fs_hz: f64,
}

impl SourceSet {
    pub fn n_datasets(&self) -> usize {
        self.sources.len()
    }

    pub fn n_sources(&self) -> usize {
        self.sources[0].nrows()
    }
}

pub const MUSCLE_BAND_HZ: (f64, f64) = (30.0, 70.0);
pub const BRAIN_BAND_HZ: (f64, f64) = (1.0, 30.0);

/// Pearson correlation between `x[t]` and `x[t + 1]`; zero for a flat or
/// too-short signal.
pub fn lag1_autocorr(x: ArrayView1<f64>) -> f64 {
    let n = x.len();
    if n < 3 {
        return 0.0;
    }
    pearson(x.slice(ndarray::s![..n - 1]), x.slice(ndarray::s![1..]))
}

pub(crate) fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Power in the muscle band over power in the brain band. The muscle band is
/// clipped at Nyquist.
pub fn band_ratio(x: &[f64], fs_hz: f64) -> f64 {
    let pxx = periodogram(x);
    let n = x.len();
    // nudge the upper edge so the Nyquist bin is included when clipped
    let hi = MUSCLE_BAND_HZ.1.min(fs_hz / 2.0 + fs_hz / n as f64 * 0.5);
    let muscle = band_power_from(&pxx, n, fs_hz, MUSCLE_BAND_HZ.0, hi);
    let brain = band_power_from(&pxx, n, fs_hz, BRAIN_BAND_HZ.0, BRAIN_BAND_HZ.1);
    if brain > 0.0 {
        muscle / brain
    } else if muscle > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Applies `model` to `data` (one recording per data set), rescales every
/// source to unit variance and fills in the diagnostics.
pub fn extract_sources(model: &DemixingModel, data: &[Recording]) -> Result<SourceSet> {
    let k_count = model.n_datasets();
    if data.len() != k_count {
        return Err(Error::ShapeMismatch(format!(
            "model has {k_count} data sets, got {}",
            data.len()
        )));
    }
    let c = model.n_sources();
    let mut out = SourceSet {
        sources: Vec::with_capacity(k_count),
        demixing: Vec::with_capacity(k_count),
        mixing: Vec::with_capacity(k_count),
        lag1_autocorr: Vec::with_capacity(k_count),
        band_ratio: Vec::with_capacity(k_count),
        labels: data[0].labels.clone(),
        fs_hz: data[0].fs_hz,
    };
    for (k, rec) in data.iter().enumerate() {
        if rec.n_channels() != c {
            return Err(Error::ShapeMismatch(format!(
                "data set {k} has {} channels, model expects {c}",
                rec.n_channels()
            )));
        }
        if rec.n_samples() < 3 {
            return Err(Error::TooShort(format!("data set {k} has {} samples", rec.n_samples())));
        }
        let z = model.whiten[k].transform(rec.data.view());
        let mut s = model.per_dataset_w[k].dot(&z);
        let mut w = model.per_dataset_w[k].clone();
        let mut a = model.per_dataset_a[k].clone();
        for (n, mut row) in s.axis_iter_mut(Axis(0)).enumerate() {
            let sd = row.std(1.0);
            if !(sd > 1e-12) {
                return Err(Error::DegenerateSource { dataset: k, index: n });
            }
            row.mapv_inplace(|v| v / sd);
            w.row_mut(n).mapv_inplace(|v| v / sd);
            a.column_mut(n).mapv_inplace(|v| v * sd);
        }
        out.lag1_autocorr.push(s.rows().into_iter().map(lag1_autocorr).collect());
        out.band_ratio
            .push(s.rows().into_iter().map(|r| band_ratio(&r.to_vec(), rec.fs_hz)).collect());
        out.sources.push(s);
        out.demixing.push(w);
        out.mixing.push(a);
    }
    Ok(out)
}

/// Amari performance index of `p = W A_true`, normalized to `[0, 1]`: zero iff
/// `p` is a scaled permutation.
pub fn amari_index(p: &Array2<f64>) -> Result<f64> {
    let n = crate::linalg::check_square(p)?;
    let abs = p.mapv(f64::abs);
    let row_max: Vec<f64> = abs.rows().into_iter().map(|r| r.fold(0.0, |m: f64, &x| m.max(x))).collect();
    let col_max: Vec<f64> = abs.columns().into_iter().map(|c| c.fold(0.0, |m: f64, &x| m.max(x))).collect();
    if row_max.iter().chain(&col_max).any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidArgument("Amari index needs no all-zero row or column".into()));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let rows: f64 = abs
        .rows()
        .into_iter()
        .zip(&row_max)
        .map(|(r, m)| r.sum() / m - 1.0)
        .sum();
    let cols: f64 = abs
        .columns()
        .into_iter()
        .zip(&col_max)
        .map(|(c, m)| c.sum() / m - 1.0)
        .sum();
    Ok((rows + cols) / (2.0 * n as f64 * (n as f64 - 1.0)))
}

/// Reorders and re-signs the demixing matrices of all data sets together:
/// rows by descending mean lag-1 autocorrelation of the sources in `z`, and
/// signs per data set from the channel-space mixing columns. Returns `(W, A)`
/// pairs.
fn canonicalize(
    ws: Vec<Array2<f64>>,
    zs: &[Array2<f64>],
    whiten: &[WhitenModel],
) -> Result<(Vec<Array2<f64>>, Vec<Array2<f64>>)> {
    let c = ws[0].nrows();
    let mut score = vec![0.0; c];
    for (w, z) in ws.iter().zip(zs) {
        let s = w.dot(z);
        for (acc, row) in score.iter_mut().zip(s.rows()) {
            *acc += lag1_autocorr(row);
        }
    }
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| score[j].total_cmp(&score[i]).then(i.cmp(&j)));

    let mut out_w = Vec::with_capacity(ws.len());
    let mut out_a = Vec::with_capacity(ws.len());
    for (w, wm) in ws.iter().zip(whiten) {
        let mut sorted = Array2::zeros(w.dim());
        for (dst, &src) in order.iter().enumerate() {
            sorted.row_mut(dst).assign(&w.row(src));
        }
        let mut a = inverse(&sorted)?;
        let signs = column_signs(&wm.v_inv.dot(&a));
        for (n, s) in signs.into_iter().enumerate() {
            if s < 0.0 {
                sorted.row_mut(n).mapv_inplace(|v| -v);
                a.column_mut(n).mapv_inplace(|v| -v);
            }
        }
        out_w.push(sorted);
        out_a.push(a);
    }
    Ok((out_w, out_a))
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use ndarray::{array, Array1};
    use std::f64::consts::PI;

    #[test]
    fn amari_examples() {
        assert_eq!(amari_index(&Array2::eye(3)).unwrap(), 0.0);
        assert_eq!(amari_index(&array![[0.0, 2.0], [-3.0, 0.0]]).unwrap(), 0.0);
        assert!((amari_index(&array![[1.0, 1.0], [1.0, 1.0]]).unwrap() - 1.0).abs() < 1e-15);
        assert!(amari_index(&array![[1.0, 0.0], [0.0, 0.0]]).is_err());
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert_eq!("fastica".parse::<Method>().unwrap(), Method::Ica);
        let err = "xyz".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("iva, ica, cca, sobi"));
    }

    #[test]
    fn sinusoid_diagnostics() {
        let x = Array1::from_shape_fn(2500, |t| (2.0 * PI * 10.0 * t as f64 / 250.0).sin());
        assert!((lag1_autocorr(x.view()) - (2.0 * PI * 10.0 / 250.0).cos()).abs() < 0.01);
        assert!(band_ratio(&x.to_vec(), 250.0) < 1e-3);
        let y = Array1::from_shape_fn(2500, |t| (2.0 * PI * 50.0 * t as f64 / 250.0).sin());
        assert!(band_ratio(&y.to_vec(), 250.0) > 1e3);
    }

    #[test]
    fn extract_identity_model() {
        let s = uniform_sources(3, 4000, 5);
        let r = rec(s);
        let model = sobi(&r, &SobiConfig::default()).unwrap();
        let set = extract_sources(&model, std::slice::from_ref(&r)).unwrap();
        let z = model.whiten[0].transform(r.data.view());
        let back = set.mixing[0].dot(&set.sources[0]);
        let err = crate::linalg::frobenius(&(&back - &z)) / crate::linalg::frobenius(&z);
        assert!(err < 1e-6);
        for row in set.sources[0].rows() {
            assert!((row.var(1.0) - 1.0).abs() < 1e-6);
        }
        for v in set.lag1_autocorr.iter().flatten() {
            assert!((-1.0..=1.0).contains(v));
        }
    }

    #[test]
    fn degenerate_source_is_reported() {
        let s = uniform_sources(2, 1000, 1);
        let model = fastica(&rec(s.clone()), &FastIcaConfig::default()).unwrap();
        let mut flat = s;
        flat.row_mut(0).fill(1.0);
        flat.row_mut(1).fill(2.0);
        let err = extract_sources(&model, &[rec(flat)]).unwrap_err();
        assert!(err.to_string().contains("degenerate source"));
    }

    #[test]
    fn extract_checks_shapes() {
        let r = rec(uniform_sources(2, 500, 2));
        let model = fastica(&r, &FastIcaConfig::default()).unwrap();
        assert!(extract_sources(&model, &[r.clone(), r.clone()]).is_err());
        assert!(extract_sources(&model, &[rec(uniform_sources(3, 500, 2))]).is_err());
    }
}
