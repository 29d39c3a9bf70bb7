//! Dense linear algebra used by the linear, sparse and physics models.
//!
//! The SVD is a one-sided (Hestenes) Jacobi iteration: columns of the
//! working matrix are rotated pairwise until they are mutually orthogonal,
//! so the accumulated rotations are the right singular vectors. Rotations
//! always act on the smaller dimension; a wide matrix is transposed first.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Convergence threshold on |<a_p, a_q>| / (|a_p| |a_q|).
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Thin SVD `A = U diag(s) V^T` with `k = min(m, n)` singular triplets.
#[derive(Debug, Clone)]
pub struct Svd {
    /// Descending, non-negative, length k.
    pub singular_values: Vec<f64>,
    /// m × k. Columns belonging to zero singular values are zero.
    pub u: Array2<f64>,
    /// n × k, orthonormal columns.
    pub v: Array2<f64>,
}

pub fn jacobi_svd(a: ArrayView2<f64>) -> Result<Svd> {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Err(Error::Validation("SVD of an empty matrix".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("SVD input contains non-finite values".into()));
    }
    if m >= n {
        let (sigma, left, right) = one_sided(a)?;
        Ok(Svd {
            singular_values: sigma,
            u: left,
            v: right,
        })
    } else {
        // A^T = U' S V'^T  =>  A = V' S U'^T.
        let (sigma, left_t, right_t) = one_sided(a.t())?;
        let mut v = left_t;
        complete_orthonormal(&mut v, &sigma);
        Ok(Svd {
            singular_values: sigma,
            u: right_t,
            v,
        })
    }
}

/// One-sided Jacobi for a tall (m >= n) matrix. Returns (sigma, U, V), sorted.
fn one_sided(a: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>, Array2<f64>)> {
    let (m, n) = a.dim();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j).to_vec()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..m {
                        alpha += cp[i] * cp[i];
                        beta += cq[i] * cq[i];
                        gamma += cp[i] * cq[i];
                    }
                    (alpha, beta, gamma)
                };
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut sigma = Vec::with_capacity(n);
    let mut u = Array2::zeros((m, n));
    let mut v = Array2::zeros((n, n));
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        if s > 0.0 {
            for i in 0..m {
                u[[i, k]] = cols[j][i] / s;
            }
        }
        for i in 0..n {
            v[[i, k]] = vcols[j][i];
        }
    }
    Ok((sigma, u, v))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fill zero columns (those paired with zero singular values) with unit
/// vectors orthogonal to every other column.
fn complete_orthonormal(basis: &mut Array2<f64>, sigma: &[f64]) {
    let (n, k) = basis.dim();
    for j in 0..k {
        if sigma[j] > 0.0 {
            continue;
        }
        for seed in 0..n {
            let mut cand = Array1::<f64>::zeros(n);
            cand[seed] = 1.0;
            for _ in 0..2 {
                for other in 0..k {
                    if other == j || (sigma[other] == 0.0 && other > j) {
                        continue;
                    }
                    let col = basis.column(other);
                    let d = col.dot(&cand);
                    cand.scaled_add(-d, &col);
                }
            }
            let norm = cand.dot(&cand).sqrt();
            if norm > 1e-6 {
                basis.column_mut(j).assign(&(cand / norm));
                break;
            }
        }
    }
}

/// Least-squares solution of `A x ≈ b`.
#[derive(Debug, Clone)]
pub struct Lstsq {
    pub x: Array1<f64>,
    pub rank: usize,
    /// True when some singular value fell below the rank tolerance; `x` is
    /// then the minimum-norm solution.
    pub rank_deficient: bool,
}

pub fn lstsq(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Lstsq> {
    let (m, n) = a.dim();
    if b.len() != m {
        return Err(Error::shape(format!("rhs of length {m}"), b.len()));
    }
    let svd = jacobi_svd(a)?;
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let tol = (m.max(n) as f64) * f64::EPSILON * smax;
    let mut x = Array1::zeros(n);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol && s > 0.0 {
            rank += 1;
            let coef = svd.u.column(k).dot(&b) / s;
            x.scaled_add(coef, &svd.v.column(k));
        }
    }
    Ok(Lstsq {
        x,
        rank,
        rank_deficient: rank < n,
    })
}
