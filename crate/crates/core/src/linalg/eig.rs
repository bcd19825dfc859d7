use ndarray::{Array1, Array2};

use super::schur::{default_max_iter, schur_decompose, SCHUR_TOL};
use super::{asymmetry, check_square};
use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix.
///
/// Eigenvalues are sorted in descending order. Each eigenvector column is
/// signed so that its largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Symmetric eigensolver on top of the real Schur decomposition: for a
/// symmetric matrix the Schur factor `T` is diagonal and `Q` holds the
/// eigenvectors.
pub fn sym_eig(a: &Array2<f64>) -> Result<SymEig> {
    let n = check_square(a)?;
    let asym = asymmetry(a);
    if asym > 1e-8 {
        return Err(Error::Asymmetric(asym));
    }
    let schur = schur_decompose(a, default_max_iter(n), SCHUR_TOL)?;
    let mut order: Vec<usize> = (0..n).collect();
    let diag = schur.t.diag();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));

    let values = Array1::from_iter(order.iter().map(|&i| diag[i]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&schur.q.column(src));
    }
    fix_column_signs(&mut vectors);
    Ok(SymEig { values, vectors })
}

/// Flips each column so its largest-magnitude entry is positive.
pub(crate) fn fix_column_signs(v: &mut Array2<f64>) {
    let signs = column_signs(v);
    for (mut col, s) in v.columns_mut().into_iter().zip(signs) {
        if s < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

/// Sign of the largest-magnitude entry of each column (+1 for a zero
/// column). Entries within a relative 1e-9 of the maximum count as ties, and
/// ties go to the first such entry.
pub(crate) fn column_signs(v: &Array2<f64>) -> Vec<f64> {
    v.columns()
        .into_iter()
        .map(|col| {
            let max = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let lead = col
                .iter()
                .copied()
                .find(|x| x.abs() >= max * (1.0 - 1e-9))
                .unwrap_or(0.0);
            if lead < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect()
}

/// `a^{-1/2}` for a symmetric positive-definite matrix.
pub fn inv_sqrt_sym(a: &Array2<f64>) -> Result<Array2<f64>> {
    let eig = sym_eig(a)?;
    if eig.values.iter().any(|&l| l <= 0.0) {
        return Err(Error::Singular);
    }
    let scaled = &eig.vectors * &eig.values.mapv(|l| 1.0 / l.sqrt());
    Ok(scaled.dot(&eig.vectors.t()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal() {
        let a = Array2::from_diag(&ndarray::arr1(&[1.0, 4.0, 2.0]));
        let e = sym_eig(&a).unwrap();
        assert_eq!(e.values.to_vec(), vec![4.0, 2.0, 1.0]);
    }

    #[test]
    fn two_by_two() {
        let e = sym_eig(&array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vectors.column(0);
        let v1 = e.vectors.column(1);
        assert!((v0[0].abs() - r).abs() < 1e-12 && (v0[0] - v0[1]).abs() < 1e-12);
        assert!((v1[0].abs() - r).abs() < 1e-12 && (v1[0] + v1[1]).abs() < 1e-12);
    }

    #[test]
    fn random_19_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let g = Array2::from_shape_simple_fn((19, 19), || rng.random_range(-1.0..1.0));
        let a = &g + &g.t();
        let e = sym_eig(&a).unwrap();
        let norm = frobenius(&a);
        for i in 0..19 {
            let v = e.vectors.column(i);
            let r = a.dot(&v) - &v * e.values[i];
            assert!(r.dot(&r).sqrt() <= 1e-8 * norm);
        }
        assert!(e.values.windows(2).into_iter().all(|w| w[0] >= w[1]));
        for col in e.vectors.columns() {
            let big = col.iter().fold(0.0f64, |m, &x| if x.abs() > m.abs() { x } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(matches!(
            sym_eig(&array![[1.0, 2.0], [0.0, 1.0]]),
            Err(Error::Asymmetric(_))
        ));
    }

    #[test]
    fn inverse_square_root() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let s = inv_sqrt_sym(&a).unwrap();
        let should_be_eye = s.dot(&a).dot(&s);
        assert!(frobenius(&(should_be_eye - Array2::<f64>::eye(2))) < 1e-12);
    }
}
