use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{covariance, sym_eig};
use crate::error::{Error, Result};

/// Default floor on `lambda_min / lambda_max` of the covariance.
pub const EIG_FLOOR: f64 = 1e-10;

/// PCA whitening `z = V (x - mean)` with `cov(z) = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenModel {
    pub v: Array2<f64>,
    pub v_inv: Array2<f64>,
    pub mean: Array1<f64>,
}

impl WhitenModel {
    pub fn transform(&self, data: ArrayView2<f64>) -> Array2<f64> {
        let centered = &data - &self.mean.view().insert_axis(Axis(1));
        self.v.dot(&centered)
    }

    pub fn inverse_transform(&self, z: ArrayView2<f64>) -> Array2<f64> {
        self.v_inv.dot(&z) + self.mean.view().insert_axis(Axis(1))
    }
}

/// Fits `V = Lambda^{-1/2} U^T` from the eigen-decomposition of the data
/// covariance. Fails when the covariance is (numerically) rank deficient,
/// which flags duplicated or flat channels.
pub fn whiten_fit(data: ArrayView2<f64>, eig_floor: f64) -> Result<WhitenModel> {
    let cov = covariance(data)?;
    let eig = sym_eig(&cov)?;
    let largest = eig.values[0];
    let smallest = eig.values[eig.values.len() - 1];
    let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
    if !(largest > 0.0) || ratio < eig_floor {
        return Err(Error::RankDeficient {
            ratio,
            floor: eig_floor,
        });
    }
    let inv_sqrt = eig.values.mapv(|l| 1.0 / l.sqrt());
    let sqrt = eig.values.mapv(f64::sqrt);
    let v = &eig.vectors.t() * &inv_sqrt.view().insert_axis(Axis(1));
    let v_inv = &eig.vectors * &sqrt;
    let mean = data.mean_axis(Axis(1)).expect("non-empty");
    Ok(WhitenModel { v, v_inv, mean })
}
