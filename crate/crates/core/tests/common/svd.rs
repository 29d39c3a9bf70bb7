//! Independent SVD oracle (nalgebra) and random orthonormal bases.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn to_na(a: ArrayView2<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Singular values, descending.
pub fn singular_values(a: ArrayView2<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(a).singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn tail_energy(a: ArrayView2<f64>, rank: usize) -> f64 {
    singular_values(a).iter().skip(rank).map(|s| s * s).sum()
}

/// `n × k` with orthonormal columns (QR of a Gaussian matrix).
pub fn random_orthonormal(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let g = nalgebra::DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    Array2::from_shape_fn((n, k), |(i, j)| q[(i, j)])
}

/// Σ‖x − V Vᵀ x‖² over the rows of `a`.
pub fn projection_error(a: ArrayView2<f64>, v: ArrayView2<f64>) -> f64 {
    let proj = a.dot(&v).dot(&v.t());
    (&a - &proj).iter().map(|x| x * x).sum()
}

pub fn gaussian(m: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((m, n), |_| StandardNormal.sample(&mut rng))
}
