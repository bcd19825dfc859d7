use ndarray::{s, Array2, ArrayView2};

use super::{canonicalize, DemixingModel, Method};
use crate::error::{Error, Result};
use crate::linalg::{covariance, sym_eig, symmetrize, whiten_fit, EIG_FLOOR};
use crate::recording::Recording;

/// Canonical correlation analysis of two views with the same sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalCorrelation {
    /// Descending, in `[0, 1]`.
    pub correlations: Vec<f64>,
    /// Rows are the canonical weight vectors of the first view.
    pub wx: Array2<f64>,
}

/// `m^{-1/2}` for a covariance, failing on (near-)rank deficiency.
fn cov_inv_sqrt(m: &Array2<f64>) -> Result<Array2<f64>> {
    let eig = sym_eig(m)?;
    let hi = eig.values[0];
    let lo = eig.values[eig.values.len() - 1];
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(hi > 0.0) || ratio < EIG_FLOOR {
        return Err(Error::RankDeficient { ratio, floor: EIG_FLOOR });
    }
    let scaled = &eig.vectors * &eig.values.mapv(|l| 1.0 / l.sqrt());
    Ok(scaled.dot(&eig.vectors.t()))
}

pub fn cca(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<CanonicalCorrelation> {
    let n = x.ncols();
    if y.ncols() != n {
        return Err(Error::ShapeMismatch(format!("views have {n} and {} samples", y.ncols())));
    }
    if n < 2 {
        return Err(Error::TooShort(format!("{n} samples")));
    }
    let cxx = covariance(x)?;
    let cyy = covariance(y)?;
    let mx = x.mean_axis(ndarray::Axis(1)).expect("non-empty").insert_axis(ndarray::Axis(1));
    let my = y.mean_axis(ndarray::Axis(1)).expect("non-empty").insert_axis(ndarray::Axis(1));
    let cxy = (&x - &mx).dot(&(&y - &my).t()) / (n - 1) as f64;

    let kx = cov_inv_sqrt(&cxx)?;
    let ky = cov_inv_sqrt(&cyy)?;
    let m = kx.dot(&cxy).dot(&ky);
    // singular values of m via the eigenvalues of m m^T
    let mut mmt = m.dot(&m.t());
    symmetrize(&mut mmt);
    let eig = sym_eig(&mmt)?;
    let correlations = eig.values.iter().map(|l| l.max(0.0).sqrt().min(1.0)).collect();
    let wx = eig.vectors.t().dot(&kx);
    Ok(CanonicalCorrelation { correlations, wx })
}

/// BSS by canonical correlation between the whitened recording and its
/// one-sample delay.
pub fn cca_bss(rec: &Recording) -> Result<DemixingModel> {
    rec.validate()?;
    let n = rec.n_samples();
    if n < 3 {
        return Err(Error::TooShort(format!("CCA needs at least 3 samples, got {n}")));
    }
    let whiten = whiten_fit(rec.data.view(), EIG_FLOOR)?;
    let z = whiten.transform(rec.data.view());
    let res = cca(z.slice(s![.., 1..]), z.slice(s![.., ..n - 1]))?;
    let (w, a) = canonicalize(vec![res.wx], std::slice::from_ref(&z), std::slice::from_ref(&whiten))?;
    let mut model = DemixingModel::single(Method::Cca, w[0].clone(), a[0].clone(), whiten);
    model.canonical_correlations = Some(res.correlations);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::bss::amari_index;
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn self_correlation_is_one() {
        let x = gaussian_sources(3, 500, 1);
        let res = cca(x.view(), x.view()).unwrap();
        for r in res.correlations {
            assert!((r - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn sinusoid_lag1() {
        let x = Array1::from_shape_fn(2500, |t| (2.0 * PI * 5.0 * t as f64 / 250.0).sin());
        let model = cca_bss(&rec(x.insert_axis(ndarray::Axis(0)))).unwrap();
        let r = model.canonical_correlations.unwrap()[0];
        assert!((r - 0.99211).abs() < 0.01, "{r}");
    }

    #[test]
    fn white_noise_lag1() {
        let model = cca_bss(&rec(gaussian_sources(1, 10_000, 2))).unwrap();
        assert!(model.canonical_correlations.unwrap()[0] <= 0.05);
    }

    #[test]
    fn separates_ar_sources() {
        let a = array![[1.0, 0.5], [0.3, 1.0]];
        let s = ar_sources(&[0.9, -0.5], 20_000, 3);
        let model = cca_bss(&rec(a.dot(&s))).unwrap();
        assert!(amari_index(&model.full_demixing(0).dot(&a)).unwrap() <= 0.05);
    }

    #[test]
    fn rank_failure() {
        let mut x = gaussian_sources(2, 100, 4);
        let r0 = x.row(0).to_owned();
        x.row_mut(1).assign(&r0);
        assert!(cca_bss(&rec(x)).is_err());
        assert!(cca_bss(&rec(gaussian_sources(1, 2, 4))).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn correlations_sorted_in_unit_interval(seed in 0u64..10_000, c in 1usize..5) {
            let x = ar_sources(&[0.8, 0.2, -0.3, 0.5, 0.0][..c], 400, seed);
            let model = cca_bss(&rec(x)).unwrap();
            let r = model.canonical_correlations.unwrap();
            prop_assert!(r.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(r.iter().all(|&v| (0.0..=1.0 + 1e-9).contains(&v)));
            let eye = model.per_dataset_w[0].dot(&model.per_dataset_a[0]);
            prop_assert!(crate::linalg::frobenius(&(eye - Array2::<f64>::eye(c))) < 1e-8);
        }
    }
}
