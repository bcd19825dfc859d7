//! Dense linear algebra used by the separation engines.
//!
//! Everything here works on small square matrices (one row/column per EEG
//! channel), so the routines favour clarity over blocking.

mod eig;
mod joint;
mod schur;
mod whiten;

pub use eig::{inv_sqrt_sym, sym_eig, SymEig};
pub use joint::{joint_diagonalize, off_diagonal, JointDiagonalization, JD_MAX_SWEEPS, JD_TOL};
pub use schur::{default_max_iter, schur_decompose, SchurForm, SCHUR_TOL};
pub use whiten::{whiten_fit, WhitenModel, EIG_FLOOR};
pub(crate) use eig::column_signs;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn check_square(a: &Array2<f64>) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::ShapeMismatch(format!("expected square matrix, got {r}x{c}")));
    }
    Ok(r)
}

/// Relative asymmetry `||a - a^T||_F / ||a||_F` (0 for the zero matrix).
pub fn asymmetry(a: &Array2<f64>) -> f64 {
    let norm = frobenius(a);
    if norm == 0.0 {
        return 0.0;
    }
    frobenius(&(a - &a.t())) / norm
}

fn row_means(data: ArrayView2<f64>) -> Array1<f64> {
    data.mean_axis(Axis(1)).expect("non-empty rows")
}

/// Unbiased sample covariance of a channels x samples matrix.
pub fn covariance(data: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = data.ncols();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let mean = row_means(data);
    let centered = &data - &mean.insert_axis(Axis(1));
    let mut cov = centered.dot(&centered.t()) / (n - 1) as f64;
    symmetrize(&mut cov);
    Ok(cov)
}

/// Symmetrized lag-`lag` covariance `(R + R^T) / 2` with
/// `R = 1/(N - lag) * sum_t (x_t - m)(x_{t+lag} - m)^T`.
pub fn lagged_covariance(data: ArrayView2<f64>, lag: usize) -> Result<Array2<f64>> {
    let n = data.ncols();
    if lag == 0 {
        return Err(Error::InvalidArgument(
            "lag must be at least 1; use covariance for lag 0".into(),
        ));
    }
    if lag + 1 >= n {
        return Err(Error::InvalidArgument(format!(
            "lag {lag} too large for {n} samples"
        )));
    }
    let mean = row_means(data).insert_axis(Axis(1));
    let centered = &data - &mean;
    let head = centered.slice(ndarray::s![.., ..n - lag]);
    let tail = centered.slice(ndarray::s![.., lag..]);
    let r = head.dot(&tail.t()) / (n - lag) as f64;
    Ok((&r + &r.t()) * 0.5)
}

pub(crate) fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
}

/// LU factorisation with partial pivoting; returns the packed factors, the
/// row permutation and the permutation sign.
fn lu(a: &Array2<f64>) -> Result<(Array2<f64>, Vec<usize>, f64)> {
    let n = check_square(a)?;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let (pivot, max) = (k..n)
            .map(|i| (i, lu[[i, k]].abs()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if max == 0.0 || !max.is_finite() {
            return Err(Error::Singular);
        }
        if pivot != k {
            for j in 0..n {
                lu.swap([k, j], [pivot, j]);
            }
            perm.swap(k, pivot);
            sign = -sign;
        }
        let d = lu[[k, k]];
        for i in k + 1..n {
            let f = lu[[i, k]] / d;
            lu[[i, k]] = f;
            for j in k + 1..n {
                lu[[i, j]] -= f * lu[[k, j]];
            }
        }
    }
    Ok((lu, perm, sign))
}

pub fn inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    let (lu, perm, _) = lu(a)?;
    let n = lu.nrows();
    let mut inv = Array2::zeros((n, n));
    for col in 0..n {
        let mut x: Vec<f64> = (0..n).map(|i| if perm[i] == col { 1.0 } else { 0.0 }).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= lu[[i, j]] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= lu[[i, j]] * x[j];
            }
            x[i] /= lu[[i, i]];
        }
        for i in 0..n {
            inv[[i, col]] = x[i];
        }
    }
    Ok(inv)
}

pub fn log_abs_det(a: &Array2<f64>) -> Result<f64> {
    let (lu, _, _) = lu(a)?;
    Ok(lu.diag().iter().map(|d| d.abs().ln()).sum())
}

/// Random orthogonal matrix from modified Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<f64> {
    loop {
        let g = Array2::from_shape_simple_fn((n, n), || rng.sample::<f64, _>(StandardNormal));
        if let Some(q) = orthonormalize_columns(g) {
            return q;
        }
    }
}

fn orthonormalize_columns(mut q: Array2<f64>) -> Option<Array2<f64>> {
    let n = q.ncols();
    for j in 0..n {
        // two passes keep the columns orthogonal to working precision
        for _ in 0..2 {
            for i in 0..j {
                let d = q.column(i).dot(&q.column(j));
                let ci = q.column(i).to_owned();
                q.column_mut(j).scaled_add(-d, &ci);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if norm < 1e-8 {
            return None;
        }
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    Some(q)
}
