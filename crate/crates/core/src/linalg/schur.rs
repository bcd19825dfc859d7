//! Real Schur decomposition `A = Q T Q^T`.
//!
//! The matrix is first reduced to upper Hessenberg form with Householder
//! reflections, then driven to quasi-triangular form by implicit double-shift
//! QR sweeps. Each sweep uses the two eigenvalues of the trailing 2x2 block as
//! shifts (Wilkinson shifts applied as a conjugate-safe pair), and converged
//! 1x1 or 2x2 blocks are deflated off the bottom of the active window.
//! Blocks with real eigenvalues are rotated to upper-triangular form so only
//! complex-conjugate pairs survive as 2x2 blocks.

use ndarray::Array2;

use super::{check_square, frobenius};
use crate::error::{Error, Result};

/// Default relative deflation tolerance.
pub const SCHUR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SchurForm {
    /// Orthogonal factor.
    pub q: Array2<f64>,
    /// Upper quasi-triangular factor.
    pub t: Array2<f64>,
}

impl SchurForm {
    /// `||A - Q T Q^T||_F`
    pub fn reconstruction_residual(&self, a: &Array2<f64>) -> f64 {
        frobenius(&(a - &self.q.dot(&self.t).dot(&self.q.t())))
    }

    /// `||Q^T Q - I||_F`
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.q.nrows();
        frobenius(&(self.q.t().dot(&self.q) - Array2::<f64>::eye(n)))
    }
}

/// Default iteration budget for a `c x c` matrix.
pub fn default_max_iter(c: usize) -> usize {
    100 * c.max(1)
}

pub fn schur_decompose(a: &Array2<f64>, max_iter: usize, tol: f64) -> Result<SchurForm> {
    let n = check_square(a)?;
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMatrix);
    }
    let (mut h, mut q) = hessenberg(a);
    let anorm = frobenius(&h);
    let tol = tol.max(f64::EPSILON);

    let mut hi = n - 1;
    let mut iterations = 0usize;
    let mut since_deflation = 0usize;
    while hi > 0 {
        // locate the top of the unreduced block ending at `hi`
        let mut lo = hi;
        while lo > 0 {
            let mut scale = h[[lo - 1, lo - 1]].abs() + h[[lo, lo]].abs();
            if scale == 0.0 {
                scale = anorm;
            }
            if h[[lo, lo - 1]].abs() <= tol * scale {
                h[[lo, lo - 1]] = 0.0;
                break;
            }
            lo -= 1;
        }

        if lo == hi {
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        if lo + 1 == hi {
            standardize_block(&mut h, &mut q, lo);
            if hi < 2 {
                break;
            }
            hi -= 2;
            since_deflation = 0;
            continue;
        }

        iterations += 1;
        if iterations > max_iter {
            let residual = (1..n)
                .map(|i| h[[i, i - 1]].abs())
                .fold(0.0, f64::max);
            return Err(Error::NoConvergence {
                iterations: max_iter,
                residual,
            });
        }
        since_deflation += 1;

        let (mut trace, mut det) = trailing_shifts(&h, hi);
        if since_deflation % 11 == 10 {
            // exceptional shift to break cycles
            let w = h[[hi, hi - 1]].abs() + h[[hi - 1, hi - 2]].abs();
            let centre = h[[hi, hi]] + 0.75 * w;
            trace = 2.0 * centre;
            det = centre * centre + 0.4375 * w * w;
        }
        francis_sweep(&mut h, &mut q, lo, hi, trace, det);
    }

    for j in 0..n {
        for i in j + 2..n {
            h[[i, j]] = 0.0;
        }
    }
    Ok(SchurForm { q, t: h })
}

fn trailing_shifts(h: &Array2<f64>, hi: usize) -> (f64, f64) {
    let a = h[[hi - 1, hi - 1]];
    let b = h[[hi - 1, hi]];
    let c = h[[hi, hi - 1]];
    let d = h[[hi, hi]];
    (a + d, a * d - b * c)
}

/// Householder vector `v` (with `v[0]` carrying the update) and `beta` such
/// that `(I - beta v v^T) x = alpha e_1`. `None` if `x` is already of that form.
fn householder(x: &[f64]) -> Option<(Vec<f64>, f64)> {
    let tail: f64 = x[1..].iter().map(|v| v * v).sum();
    if tail == 0.0 {
        return None;
    }
    let norm = (x[0] * x[0] + tail).sqrt();
    let alpha = if x[0] >= 0.0 { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vv: f64 = v.iter().map(|e| e * e).sum();
    Some((v, 2.0 / vv))
}

/// Applies `I - beta v v^T` from the left to rows `r0..r0+len(v)` over `cols`.
fn reflect_rows(m: &mut Array2<f64>, v: &[f64], beta: f64, r0: usize, cols: std::ops::Range<usize>) {
    for j in cols {
        let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * m[[r0 + i, j]]).sum();
        let f = beta * dot;
        for (i, vi) in v.iter().enumerate() {
            m[[r0 + i, j]] -= f * vi;
        }
    }
}

/// Applies `I - beta v v^T` from the right to columns `c0..c0+len(v)` over `rows`.
fn reflect_cols(m: &mut Array2<f64>, v: &[f64], beta: f64, c0: usize, rows: std::ops::Range<usize>) {
    for i in rows {
        let dot: f64 = v.iter().enumerate().map(|(j, vj)| vj * m[[i, c0 + j]]).sum();
        let f = beta * dot;
        for (j, vj) in v.iter().enumerate() {
            m[[i, c0 + j]] -= f * vj;
        }
    }
}

fn hessenberg(a: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut h = a.clone();
    let mut q = Array2::<f64>::eye(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<f64> = (k + 1..n).map(|i| h[[i, k]]).collect();
        if let Some((v, beta)) = householder(&x) {
            reflect_rows(&mut h, &v, beta, k + 1, k..n);
            reflect_cols(&mut h, &v, beta, k + 1, 0..n);
            reflect_cols(&mut q, &v, beta, k + 1, 0..n);
        }
        for i in k + 2..n {
            h[[i, k]] = 0.0;
        }
    }
    (h, q)
}

/// One implicit double-shift QR sweep over the active window `lo..=hi`,
/// updating the full `h` so that `Q^T A Q = H` is maintained.
fn francis_sweep(h: &mut Array2<f64>, q: &mut Array2<f64>, lo: usize, hi: usize, trace: f64, det: f64) {
    let n = h.nrows();
    let mut x = h[[lo, lo]] * h[[lo, lo]] + h[[lo, lo + 1]] * h[[lo + 1, lo]]
        - trace * h[[lo, lo]]
        + det;
    let mut y = h[[lo + 1, lo]] * (h[[lo, lo]] + h[[lo + 1, lo + 1]] - trace);
    let mut z = h[[lo + 1, lo]] * h[[lo + 2, lo + 1]];

    for k in lo..=hi - 2 {
        if let Some((v, beta)) = householder(&[x, y, z]) {
            let col_start = if k > lo { k - 1 } else { lo };
            reflect_rows(h, &v, beta, k, col_start..n);
            let row_end = (k + 4).min(hi + 1);
            reflect_cols(h, &v, beta, k, 0..row_end);
            reflect_cols(q, &v, beta, k, 0..n);
        }
        if k > lo {
            h[[k + 1, k - 1]] = 0.0;
            h[[k + 2, k - 1]] = 0.0;
        }
        x = h[[k + 1, k]];
        y = h[[k + 2, k]];
        if k + 3 <= hi {
            z = h[[k + 3, k]];
        }
    }

    if let Some((v, beta)) = householder(&[x, y]) {
        reflect_rows(h, &v, beta, hi - 1, hi - 2..n);
        reflect_cols(h, &v, beta, hi - 1, 0..hi + 1);
        reflect_cols(q, &v, beta, hi - 1, 0..n);
    }
    h[[hi, hi - 2]] = 0.0;
}

/// Rotates the 2x2 diagonal block at `(p, p)` to upper-triangular form when
/// its eigenvalues are real.
fn standardize_block(h: &mut Array2<f64>, q: &mut Array2<f64>, p: usize) {
    let n = h.nrows();
    let a = h[[p, p]];
    let b = h[[p, p + 1]];
    let c = h[[p + 1, p]];
    let d = h[[p + 1, p + 1]];
    let half = 0.5 * (a - d);
    let mut disc = half * half + b * c;
    if disc < 0.0 && -disc <= 1e-14 * (a * a + d * d + (b * c).abs()) {
        disc = 0.0;
    }
    if disc < 0.0 {
        return;
    }
    // eigenvector of the eigenvalue farther from d, chosen to avoid cancellation
    let root = disc.sqrt();
    let lambda_minus_d = half + if half >= 0.0 { root } else { -root };
    let (mut cs, mut sn) = (lambda_minus_d, c);
    let norm = cs.hypot(sn);
    if norm == 0.0 {
        return;
    }
    cs /= norm;
    sn /= norm;

    for j in p..n {
        let u = h[[p, j]];
        let w = h[[p + 1, j]];
        h[[p, j]] = cs * u + sn * w;
        h[[p + 1, j]] = -sn * u + cs * w;
    }
    for i in 0..p + 2 {
        let u = h[[i, p]];
        let w = h[[i, p + 1]];
        h[[i, p]] = cs * u + sn * w;
        h[[i, p + 1]] = -sn * u + cs * w;
    }
    for i in 0..n {
        let u = q[[i, p]];
        let w = q[[i, p + 1]];
        q[[i, p]] = cs * u + sn * w;
        q[[i, p + 1]] = -sn * u + cs * w;
    }
    h[[p + 1, p]] = 0.0;
}
