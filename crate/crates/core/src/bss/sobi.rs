use ndarray::Array2;

use super::{canonicalize, DemixingModel, Method};
use crate::error::{Error, Result};
use crate::linalg::{joint_diagonalize, lagged_covariance, whiten_fit, EIG_FLOOR, JD_MAX_SWEEPS, JD_TOL};
use crate::recording::Recording;

/// Lags in samples, spread over short-range EEG autocorrelation scales.
pub const DEFAULT_LAGS: [usize; 7] = [1, 2, 3, 5, 8, 13, 21];

#[derive(Debug, Clone, PartialEq)]
pub struct SobiConfig {
    pub lags: Vec<usize>,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SobiConfig {
    fn default() -> Self {
        SobiConfig {
            lags: DEFAULT_LAGS.to_vec(),
            tol: JD_TOL,
            max_sweeps: JD_MAX_SWEEPS,
        }
    }
}

/// Second-order blind identification: joint diagonalization of lagged
/// covariances of the whitened data.
pub fn sobi(rec: &Recording, cfg: &SobiConfig) -> Result<DemixingModel> {
    rec.validate()?;
    let n = rec.n_samples();
    if cfg.lags.is_empty() {
        return Err(Error::InvalidArgument("SOBI needs at least one lag".into()));
    }
    if let Some(&bad) = cfg.lags.iter().find(|&&l| l == 0 || 4 * l >= n) {
        return Err(Error::InvalidArgument(format!(
            "lag {bad} outside 1..{} (must be below N/4)",
            n.div_ceil(4)
        )));
    }
    let whiten = whiten_fit(rec.data.view(), EIG_FLOOR)?;
    let z = whiten.transform(rec.data.view());
    let mats = cfg
        .lags
        .iter()
        .map(|&l| lagged_covariance(z.view(), l))
        .collect::<Result<Vec<_>>>()?;
    let jd = joint_diagonalize(&mats, cfg.tol, cfg.max_sweeps)?;

    let mut warnings = Vec::new();
    if !jd.converged {
        warnings.push(format!(
            "sobi: joint diagonalization stopped after {} sweeps without converging",
            jd.sweeps
        ));
    }
    if let Some((i, j, gap)) = closest_profiles(&jd.v, &mats) {
        // lagged autocovariances of white noise scatter by about 1/sqrt(N)
        if gap < 6.0 / (n as f64).sqrt() {
            warnings.push(format!(
                "sobi: sources {i} and {j} have nearly identical lag profiles \
                 (max difference {gap:.2e}); separation is not identifiable"
            ));
        }
    }

    let (w, a) = canonicalize(vec![jd.v.t().to_owned()], std::slice::from_ref(&z), std::slice::from_ref(&whiten))?;
    let mut model = DemixingModel::single(Method::Sobi, w[0].clone(), a[0].clone(), whiten);
    model.warnings = warnings;
    model.iterations = jd.sweeps;
    Ok(model)
}

/// The pair of sources whose lagged autocovariance profiles are closest in
/// max-norm, with that distance.
fn closest_profiles(v: &Array2<f64>, mats: &[Array2<f64>]) -> Option<(usize, usize, f64)> {
    let c = v.ncols();
    let profiles: Vec<Vec<f64>> = mats
        .iter()
        .map(|m| v.t().dot(m).dot(v).diag().to_vec())
        .collect();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..c {
        for j in i + 1..c {
            let gap = profiles
                .iter()
                .map(|d| (d[i] - d[j]).abs())
                .fold(0.0, f64::max);
            if best.is_none_or(|b| gap < b.2) {
                best = Some((i, j, gap));
            }
        }
    }
    best
}
