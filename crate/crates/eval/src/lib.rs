//! Seeded constructions and closed-form oracles shared by the benchmarks and
//! the acceptance suite.

use std::f64::consts::PI;

use ivaclean_core::recording::default_labels;
use ivaclean_core::Recording;
use ndarray::{array, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Array2::from_shape_simple_fn((n, n), || rng.random_range(-1.0..1.0));
    (&g + &g.t()) * 0.5
}

/// Eigenvalues of a 2x2 or 3x3 symmetric matrix from its characteristic
/// polynomial, descending. The cubic uses the trigonometric form.
pub fn char_poly_roots(a: &Array2<f64>) -> Vec<f64> {
    match a.nrows() {
        2 => {
            let tr = a[[0, 0]] + a[[1, 1]];
            let det = a[[0, 0]] * a[[1, 1]] - a[[0, 1]] * a[[1, 0]];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            vec![tr / 2.0 + disc, tr / 2.0 - disc]
        }
        3 => {
            let q = (a[[0, 0]] + a[[1, 1]] + a[[2, 2]]) / 3.0;
            let p1 = a[[0, 1]].powi(2) + a[[0, 2]].powi(2) + a[[1, 2]].powi(2);
            let p2 = (a[[0, 0]] - q).powi(2) + (a[[1, 1]] - q).powi(2) + (a[[2, 2]] - q).powi(2) + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            if p == 0.0 {
                return vec![q; 3];
            }
            let b = (a - &(Array2::<f64>::eye(3) * q)) / p;
            let det_b = b[[0, 0]] * (b[[1, 1]] * b[[2, 2]] - b[[1, 2]] * b[[2, 1]])
                - b[[0, 1]] * (b[[1, 0]] * b[[2, 2]] - b[[1, 2]] * b[[2, 0]])
                + b[[0, 2]] * (b[[1, 0]] * b[[2, 1]] - b[[1, 1]] * b[[2, 0]]);
            let phi = (det_b / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
            let l1 = q + 2.0 * p * phi.cos();
            let l3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
            let mut roots = vec![l1, 3.0 * q - l1 - l3, l3];
            roots.sort_by(|x, y| y.total_cmp(x));
            roots
        }
        n => panic!("no closed form for {n}x{n}"),
    }
}

pub fn recording(data: Array2<f64>) -> Recording {
    Recording::new(default_labels(data.nrows()), 250.0, data).expect("finite construction")
}

/// Unit-innovation AR(1) sources, one row per coefficient.
pub fn ar_sources(coefs: &[f64], n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Array2::zeros((coefs.len(), n));
    for (i, &phi) in coefs.iter().enumerate() {
        let mut prev = 0.0;
        for t in 0..n {
            prev = phi * prev + rng.sample::<f64, _>(StandardNormal);
            s[[i, t]] = prev;
        }
    }
    s
}

/// Unit-variance uniform sources.
pub fn uniform_sources(c: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = 3f64.sqrt();
    Array2::from_shape_simple_fn((c, n), || rng.random_range(-r..r))
}

pub fn gaussian_sources(c: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((c, n), || rng.sample::<f64, _>(StandardNormal))
}

/// Two AR(1) sources (0.9 and -0.5) under a fixed non-orthogonal mixing.
pub fn sobi_pair(seed: u64) -> (Recording, Array2<f64>) {
    let a = array![[1.0, 0.5], [0.3, 1.0]];
    let s = ar_sources(&[0.9, -0.5], 20_000, seed);
    (recording(a.dot(&s)), a)
}

/// Two uniform i.i.d. sources under a fixed mixing.
pub fn fastica_pair(seed: u64) -> (Recording, Array2<f64>) {
    let a = array![[2.0, 1.0], [1.0, 1.0]];
    let s = uniform_sources(2, 20_000, seed);
    (recording(a.dot(&s)), a)
}

/// Two segments sharing one mixing, where each source's second-segment time
/// course has correlation `rho` with its first-segment course.
pub fn correlated_pair(seed: u64, rho: f64) -> (Vec<Recording>, Array2<f64>) {
    let n = 5000;
    let coefs = [0.9, 0.5, -0.4];
    let s1 = ar_sources(&coefs, n, seed);
    let e = ar_sources(&coefs, n, seed + 1000);
    let s2 = &s1 * rho + &e * (1.0 - rho * rho).sqrt();
    let a = array![[1.0, 0.4, 0.2], [0.3, 1.0, 0.5], [0.1, 0.6, 1.0]];
    (vec![recording(a.dot(&s1)), recording(a.dot(&s2))], a)
}

pub fn pearson(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let (mx, my) = (x.mean().unwrap_or(0.0), y.mean().unwrap_or(0.0));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y.iter()) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Mean |corr| between row i of `a` and row i of `b`.
pub fn mean_row_correlation(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows().min(b.nrows());
    (0..n).map(|i| pearson(a.row(i), b.row(i)).abs()).sum::<f64>() / n as f64
}

pub fn sine(hz: f64, fs: f64, secs: f64) -> Vec<f64> {
    let n = (fs * secs) as usize;
    (0..n).map(|t| (2.0 * PI * hz * t as f64 / fs).sin()).collect()
}

/// Amplitude of a steady sinusoid, measured over the middle half.
pub fn steady_amplitude(y: &[f64]) -> f64 {
    let mid = &y[y.len() / 4..3 * y.len() / 4];
    (2.0 * mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt()
}
