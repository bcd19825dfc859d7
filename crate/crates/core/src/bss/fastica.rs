use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{canonicalize, DemixingModel, Method};
use crate::error::Result;
use crate::linalg::{inv_sqrt_sym, random_orthogonal, symmetrize, whiten_fit, EIG_FLOOR};
use crate::recording::Recording;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Tanh,
    Cube,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastIcaConfig {
    pub nonlinearity: Nonlinearity,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FastIcaConfig {
    fn default() -> Self {
        FastIcaConfig {
            nonlinearity: Nonlinearity::Tanh,
            tol: 1e-7,
            max_iter: 1000,
            seed: 0,
        }
    }
}

/// `(W W^T)^{-1/2} W`: the closest orthogonal matrix to `W`.
pub(crate) fn symmetric_decorrelation(w: &Array2<f64>) -> Result<Array2<f64>> {
    let mut g = w.dot(&w.t());
    symmetrize(&mut g);
    Ok(inv_sqrt_sym(&g)?.dot(w))
}

/// Symmetric FastICA on whitened data.
pub fn fastica(rec: &Recording, cfg: &FastIcaConfig) -> Result<DemixingModel> {
    rec.validate()?;
    let whiten = whiten_fit(rec.data.view(), EIG_FLOOR)?;
    let z = whiten.transform(rec.data.view());
    let (c, n) = z.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = random_orthogonal(c, &mut rng);

    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    while iterations < cfg.max_iter {
        iterations += 1;
        let y = w.dot(&z);
        let (g, dg) = match cfg.nonlinearity {
            Nonlinearity::Tanh => {
                let g = y.mapv(f64::tanh);
                let dg = g.mapv(|t| 1.0 - t * t);
                (g, dg)
            }
            Nonlinearity::Cube => (y.mapv(|v| v * v * v), y.mapv(|v| 3.0 * v * v)),
        };
        let mean_dg = dg.mean_axis(Axis(1)).expect("non-empty");
        let next = g.dot(&z.t()) / n as f64 - &w * &mean_dg.insert_axis(Axis(1));
        let next = symmetric_decorrelation(&next)?;
        let overlap = next.dot(&w.t());
        last_change = 1.0 - overlap.diag().iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
        w = next;
        if last_change < cfg.tol {
            converged = true;
            break;
        }
    }

    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "fastica: no convergence after {iterations} iterations (change {last_change:.2e})"
        ));
    }
    // ICA cannot tell apart two (near-)Gaussian sources
    let y = w.dot(&z);
    let band = 5.0 * (24.0 / n as f64).sqrt();
    let gaussian: Vec<usize> = y
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| excess_kurtosis(r.iter().copied()).abs() < band)
        .map(|(i, _)| i)
        .collect();
    if gaussian.len() >= 2 {
        warnings.push(format!(
            "fastica: {} sources are indistinguishable from Gaussian; their separation is not identifiable",
            gaussian.len()
        ));
    }

    let (ws, as_) = canonicalize(vec![w], std::slice::from_ref(&z), std::slice::from_ref(&whiten))?;
    let mut model = DemixingModel::single(Method::Ica, ws[0].clone(), as_[0].clone(), whiten);
    model.warnings = warnings;
    model.iterations = iterations;
    Ok(model)
}

fn excess_kurtosis(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = x.clone().count() as f64;
    let mean = x.clone().sum::<f64>() / n;
    let (m2, m4) = x.fold((0.0, 0.0), |(m2, m4), v| {
        let d = (v - mean) * (v - mean);
        (m2 + d, m4 + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 > 0.0 {
        m4 / (m2 * m2) - 3.0
    } else {
        0.0
    }
}
