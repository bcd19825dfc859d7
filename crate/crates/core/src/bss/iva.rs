use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fastica::symmetric_decorrelation;
use super::{canonicalize, pearson, sobi, DemixingModel, Method, SobiConfig};
use crate::error::{Error, Result};
use crate::linalg::{log_abs_det, random_orthogonal, WhitenModel};
use crate::recording::Recording;

#[derive(Debug, Clone, PartialEq)]
pub struct IvaConfig {
    /// Initial step of the backtracking line search.
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Seeds the fallback initialization of segments where SOBI fails.
    pub seed: u64,
    pub sobi: SobiConfig,
}

impl Default for IvaConfig {
    fn default() -> Self {
        IvaConfig {
            step: 1.0,
            tol: 1e-7,
            max_iter: 300,
            seed: 0,
            sobi: SobiConfig::default(),
        }
    }
}

/// Halvings tried before a step is declared unproductive.
const MAX_HALVINGS: usize = 30;

/// Independent vector analysis with a multivariate Laplace prior on each
/// source component vector (the same source index across all data sets).
pub fn iva(segments: &[Recording], cfg: &IvaConfig) -> Result<DemixingModel> {
    if segments.len() < 2 {
        return Err(Error::InvalidArgument("IVA requires multiple data sets".into()));
    }
    let (c, n) = segments[0].data.dim();
    for (k, seg) in segments.iter().enumerate() {
        seg.validate()?;
        if seg.data.dim() != (c, n) {
            return Err(Error::ShapeMismatch(format!(
                "segment {k} is {:?}, segment 0 is {:?}",
                seg.data.dim(),
                (c, n)
            )));
        }
    }
    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step {} must be positive", cfg.step)));
    }

    let mut warnings = Vec::new();
    let mut whiten: Vec<WhitenModel> = Vec::with_capacity(segments.len());
    let mut ws: Vec<Array2<f64>> = Vec::with_capacity(segments.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for (k, seg) in segments.iter().enumerate() {
        match sobi(seg, &cfg.sobi) {
            Ok(m) => {
                whiten.push(m.whiten[0].clone());
                ws.push(m.per_dataset_w[0].clone());
            }
            Err(Error::NoConvergence { .. }) => {
                warnings.push(format!("iva: SOBI failed on segment {k}; random initialization"));
                let wm = crate::linalg::whiten_fit(seg.data.view(), crate::linalg::EIG_FLOOR)?;
                whiten.push(wm);
                ws.push(random_orthogonal(c, &mut rng));
            }
            Err(e) => return Err(e),
        }
    }
    let zs: Vec<Array2<f64>> = segments
        .iter()
        .zip(&whiten)
        .map(|(seg, wm)| wm.transform(seg.data.view()))
        .collect();

    align(&mut ws, segments, &whiten);

    let mut cost = iva_cost(&ws, &zs)?;
    let mut history = vec![cost];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let directions = descent_directions(&ws, &zs);
        let mut step = cfg.step;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = ws
                .iter()
                .zip(&directions)
                .map(|(w, d)| symmetric_decorrelation(&(w + &(d * step))))
                .collect::<Result<Vec<_>>>()?;
            let trial_cost = iva_cost(&trial, &zs)?;
            if trial_cost < cost {
                accepted = Some((trial, trial_cost));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, trial_cost)) = accepted else {
            // no step decreases the cost: a stationary point
            converged = true;
            break;
        };
        let delta = cost - trial_cost;
        ws = trial;
        cost = trial_cost;
        history.push(cost);
        if delta < cfg.tol * cost.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!(
            "iva: no convergence after {iterations} iterations (cost {cost:.6})"
        ));
    }

    let (ws, as_) = canonicalize(ws, &zs, &whiten)?;
    Ok(DemixingModel {
        method: Method::Iva,
        per_dataset_w: ws,
        per_dataset_a: as_,
        whiten,
        warnings,
        canonical_correlations: None,
        cost_history: history,
        iterations,
    })
}

/// `J = sum_n mean_t ||y_n(t)|| - sum_k log|det W_k|`.
pub(crate) fn iva_cost(ws: &[Array2<f64>], zs: &[Array2<f64>]) -> Result<f64> {
    let norms = scv_norms(ws, zs);
    let (_, n) = norms.dim();
    let mut j: f64 = norms.sum_axis(Axis(1)).iter().map(|s| s / n as f64).sum();
    for w in ws {
        j -= log_abs_det(w)?;
    }
    Ok(j)
}

/// `r[n, t] = ||(y_1[n, t], ..., y_K[n, t])||`.
fn scv_norms(ws: &[Array2<f64>], zs: &[Array2<f64>]) -> Array2<f64> {
    let mut sq: Option<Array2<f64>> = None;
    for (w, z) in ws.iter().zip(zs) {
        let y2 = w.dot(z).mapv(|v| v * v);
        sq = Some(match sq {
            None => y2,
            Some(acc) => acc + y2,
        });
    }
    sq.expect("at least one data set").mapv(f64::sqrt)
}

/// Relative-gradient descent directions `(I - E[phi(y) y^T]) W_k`, where
/// `phi(y)_{k,n} = y_{k,n} / ||y_n||` is the Laplace score.
fn descent_directions(ws: &[Array2<f64>], zs: &[Array2<f64>]) -> Vec<Array2<f64>> {
    let r = scv_norms(ws, zs).mapv(|v| v.max(f64::MIN_POSITIVE));
    ws.iter()
        .zip(zs)
        .map(|(w, z)| {
            let y = w.dot(z);
            let phi = &y / &r;
            let n = y.ncols() as f64;
            let g = Array2::<f64>::eye(w.nrows()) - phi.dot(&y.t()) / n;
            g.dot(w)
        })
        .collect()
}

/// Greedy alignment of the sources of each data set to the previous one, by
/// absolute correlation of both demixers applied to the same (current)
/// segment. Rows are permuted and re-signed in place.
fn align(ws: &mut [Array2<f64>], segments: &[Recording], whiten: &[WhitenModel]) {
    let c = ws[0].nrows();
    for k in 1..ws.len() {
        let x = &segments[k].data - &whiten[k].mean.view().insert_axis(Axis(1));
        let prev = ws[k - 1].dot(&whiten[k - 1].v).dot(&x);
        let cur = ws[k].dot(&whiten[k].v).dot(&x);
        let mut pairs = Vec::with_capacity(c * c);
        for i in 0..c {
            for j in 0..c {
                pairs.push((i, j, pearson(prev.row(i), cur.row(j))));
            }
        }
        pairs.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then((a.0, a.1).cmp(&(b.0, b.1))));
        let mut target = vec![None; c];
        let mut used = vec![false; c];
        for (i, j, r) in pairs {
            if target[i].is_none() && !used[j] {
                target[i] = Some((j, r));
                used[j] = true;
            }
        }
        let old = ws[k].clone();
        for (i, t) in target.into_iter().enumerate() {
            let (j, r) = t.expect("greedy matching is complete");
            let sign = if r < 0.0 { -1.0 } else { 1.0 };
            ws[k].row_mut(i).assign(&(&old.row(j) * sign));
        }
    }
}
