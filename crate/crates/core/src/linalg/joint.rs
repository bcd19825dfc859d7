//! Joint approximate diagonalization of symmetric matrices by Jacobi
//! (Givens) sweeps.

use ndarray::Array2;

use super::eig::fix_column_signs;
use super::{asymmetry, sym_eig};
use crate::error::{Error, Result};

pub const JD_TOL: f64 = 1e-10;
pub const JD_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct JointDiagonalization {
    /// Orthogonal basis; columns are sorted by descending summed diagonal.
    pub v: Array2<f64>,
    pub sweeps: usize,
    /// `false` when `max_sweeps` ran out before the rotations became negligible.
    pub converged: bool,
    /// Criterion `sum_m off(V^T A_m V)` before the first sweep and after each one.
    pub criterion: Vec<f64>,
}

/// Sum of squared off-diagonal entries.
pub fn off_diagonal(a: &Array2<f64>) -> f64 {
    a.indexed_iter()
        .filter(|((i, j), _)| i != j)
        .map(|(_, v)| v * v)
        .sum()
}

fn total_off(mats: &[Array2<f64>]) -> f64 {
    mats.iter().map(off_diagonal).sum()
}

/// Finds the orthogonal `V` that (approximately) minimizes
/// `sum_m off(V^T A_m V)`. A single matrix goes through the Schur-based
/// symmetric eigensolver instead.
pub fn joint_diagonalize(
    mats: &[Array2<f64>],
    tol: f64,
    max_sweeps: usize,
) -> Result<JointDiagonalization> {
    let first = mats
        .first()
        .ok_or_else(|| Error::InvalidArgument("no matrices to diagonalize".into()))?;
    let n = super::check_square(first)?;
    for m in mats {
        if m.dim() != (n, n) {
            return Err(Error::ShapeMismatch("matrices differ in size".into()));
        }
        let asym = asymmetry(m);
        if asym > 1e-8 {
            return Err(Error::Asymmetric(asym));
        }
    }

    let initial = total_off(mats);
    if mats.len() == 1 {
        let eig = sym_eig(first)?;
        let rotated = eig.vectors.t().dot(first).dot(&eig.vectors);
        return Ok(JointDiagonalization {
            v: eig.vectors,
            sweeps: 1,
            converged: true,
            criterion: vec![initial, off_diagonal(&rotated)],
        });
    }

    let mut work: Vec<Array2<f64>> = mats.to_vec();
    let mut v = Array2::<f64>::eye(n);
    let mut criterion = vec![initial];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                // 2x2 Gram of (a_pp - a_qq, a_pq + a_qp) over all matrices
                let (mut g00, mut g01, mut g11) = (0.0, 0.0, 0.0);
                for a in &work {
                    let h0 = a[[p, p]] - a[[q, q]];
                    let h1 = a[[p, q]] + a[[q, p]];
                    g00 += h0 * h0;
                    g01 += h0 * h1;
                    g11 += h1 * h1;
                }
                let ton = g00 - g11;
                let toff = 2.0 * g01;
                let theta = 0.25 * toff.atan2(ton);
                let (s, c) = theta.sin_cos();
                if s.abs() <= tol {
                    continue;
                }
                rotated = true;
                rotate(&mut v, false, p, q, c, s);
                for a in work.iter_mut() {
                    rotate(a, true, p, q, c, s);
                }
            }
        }
        criterion.push(total_off(&work));
        if !rotated {
            converged = true;
            break;
        }
    }

    // canonical column order and signs
    let n_cols = v.ncols();
    let score: Vec<f64> = (0..n_cols)
        .map(|i| work.iter().map(|a| a[[i, i]]).sum())
        .collect();
    let mut order: Vec<usize> = (0..n_cols).collect();
    order.sort_by(|&i, &j| score[j].total_cmp(&score[i]).then(i.cmp(&j)));
    let mut sorted = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        sorted.column_mut(dst).assign(&v.column(src));
    }
    fix_column_signs(&mut sorted);

    Ok(JointDiagonalization {
        v: sorted,
        sweeps,
        converged,
        criterion,
    })
}

/// Applies the Givens rotation `G = [[c, -s], [s, c]]` on indices `(p, q)`:
/// `M <- M G` always, and additionally `M <- G^T M` when `two_sided` is set.
fn rotate(m: &mut Array2<f64>, two_sided: bool, p: usize, q: usize, c: f64, s: f64) {
    let n = m.nrows();
    if two_sided {
        for j in 0..m.ncols() {
            let (a, b) = (m[[p, j]], m[[q, j]]);
            m[[p, j]] = c * a + s * b;
            m[[q, j]] = -s * a + c * b;
        }
    }
    for i in 0..n {
        let (a, b) = (m[[i, p]], m[[i, q]]);
        m[[i, p]] = c * a + s * b;
        m[[i, q]] = -s * a + c * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, random_orthogonal};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn conj(v: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
        v.t().dot(a).dot(v)
    }

    #[test]
    fn single_matrix() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let jd = joint_diagonalize(std::slice::from_ref(&a), JD_TOL, JD_MAX_SWEEPS).unwrap();
        assert!(off_diagonal(&conj(&jd.v, &a)) <= 1e-9);
        let eig = sym_eig(&a).unwrap();
        assert!(frobenius(&(&jd.v - &eig.vectors)) < 1e-12);
    }

    #[test]
    fn duplicated_matches_single() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let one = joint_diagonalize(std::slice::from_ref(&a), JD_TOL, JD_MAX_SWEEPS).unwrap();
        let two = joint_diagonalize(&[a.clone(), a.clone()], JD_TOL, JD_MAX_SWEEPS).unwrap();
        assert!(two.converged);
        assert!(frobenius(&(&one.v - &two.v)) < 1e-9, "{} vs {}", one.v, two.v);
    }

    #[test]
    fn commuting_diagonal_matrices() {
        let mats = [
            Array2::from_diag(&ndarray::arr1(&[1.0, 2.0])),
            Array2::from_diag(&ndarray::arr1(&[3.0, 4.0])),
        ];
        let jd = joint_diagonalize(&mats, JD_TOL, JD_MAX_SWEEPS).unwrap();
        assert_eq!(jd.v, array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn recovers_common_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let u = random_orthogonal(6, &mut rng);
        let mats: Vec<_> = (0..5)
            .map(|_| {
                let d = ndarray::Array1::from_shape_simple_fn(6, || rng.random_range(-3.0..3.0));
                u.dot(&Array2::from_diag(&d)).dot(&u.t())
            })
            .collect();
        let jd = joint_diagonalize(&mats, JD_TOL, JD_MAX_SWEEPS).unwrap();
        assert!(jd.converged);
        let total: f64 = mats.iter().map(|a| off_diagonal(&conj(&jd.v, a))).sum();
        assert!(total < 1e-18, "{total}");
        for w in jd.criterion.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(joint_diagonalize(&[], JD_TOL, 5).is_err());
        assert!(matches!(
            joint_diagonalize(&[array![[1.0, 1.0], [0.0, 1.0]]], JD_TOL, 5),
            Err(Error::Asymmetric(_))
        ));
    }
}
