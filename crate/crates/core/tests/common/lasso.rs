//! Cyclic coordinate descent for ½‖y − Ax‖² + λ‖x‖₁, used as an oracle.

use ndarray::{Array1, ArrayView1, ArrayView2};

pub fn objective(a: ArrayView2<f64>, y: ArrayView1<f64>, x: ArrayView1<f64>, lambda: f64) -> f64 {
    let r = &y - &a.dot(&x);
    0.5 * r.dot(&r) + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// Sweeps until the objective changes by less than `tol` (absolute).
pub fn coordinate_descent(a: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64, tol: f64) -> Array1<f64> {
    let n = a.ncols();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).dot(&a.column(j))).collect();
    let mut x = Array1::<f64>::zeros(n);
    let mut r = y.to_owned();
    let mut prev = objective(a, y, x.view(), lambda);
    for _ in 0..200_000 {
        for j in 0..n {
            if norms[j] == 0.0 {
                continue;
            }
            let col = a.column(j);
            let rho = col.dot(&r) + norms[j] * x[j];
            let next = if rho > lambda {
                (rho - lambda) / norms[j]
            } else if rho < -lambda {
                (rho + lambda) / norms[j]
            } else {
                0.0
            };
            let delta = next - x[j];
            if delta != 0.0 {
                r.scaled_add(-delta, &col);
                x[j] = next;
            }
        }
        let obj = objective(a, y, x.view(), lambda);
        if (prev - obj).abs() < tol {
            break;
        }
        prev = obj;
    }
    x
}

/// 26×92 Gaussian dictionary with a 5-sparse signal plus noise.
pub fn random_instance(seed: u64) -> (ndarray::Array2<f64>, Array1<f64>) {
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let a = ndarray::Array2::from_shape_fn((26, 92), |_| rng.sample::<f64, _>(StandardNormal) / 26f64.sqrt());
    let mut x = Array1::<f64>::zeros(92);
    for _ in 0..5 {
        let j = rng.random_range(0..92);
        x[j] = rng.sample::<f64, _>(StandardNormal) * 2.0;
    }
    let noise = Array1::from_shape_fn(26, |_| 0.05 * rng.sample::<f64, _>(StandardNormal));
    let y = a.dot(&x) + noise;
    (a, y)
}
