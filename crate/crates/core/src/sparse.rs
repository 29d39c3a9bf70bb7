//! Material-basis sparse model.
//!
//! A spectrum is coded against the 92 standardized elemental LACs by
//! solving the lasso `½‖y − A x‖² + λ‖x‖₁` with FISTA, keeping the
//! `k_select` largest coefficients and refitting them by least squares.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::attenuation::{ElementLibrary, EnergyGrid, MAX_Z};
use crate::error::{Error, Result};
use crate::eval::{nmse, Reconstructor};
use crate::linalg::lstsq;
use crate::synth::StandardizationStats;

pub const DEFAULT_K_SELECT: usize = 5;
pub const DEFAULT_MAX_ITERS: usize = 2000;
pub const DEFAULT_TOL: f64 = 1e-8;
const POWER_ITER_TOL: f64 = 1e-8;
const POWER_ITER_MAX: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseBasis {
    /// n_bins × n_atoms; column j belongs to atomic number `atoms[j]`.
    pub matrix: Array2<f64>,
    pub atoms: Vec<u8>,
    pub lambda: f64,
    pub k_select: usize,
    pub max_iters: usize,
    pub tol: f64,
    lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    /// Atomic numbers of the selected columns.
    pub indices: Vec<u8>,
    pub coefficients: Vec<f64>,
    pub objective_history: Vec<f64>,
    /// The restricted least-squares system was rank deficient; coefficients
    /// are the minimum-norm solution.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone)]
pub struct FistaSolution {
    pub x: Array1<f64>,
    pub objective_history: Vec<f64>,
}

impl SparseBasis {
    /// Wraps an arbitrary dictionary; columns are labelled 1, 2, ... in order.
    pub fn from_matrix(matrix: Array2<f64>, lambda: f64, k_select: usize) -> Result<Self> {
        let atoms = (1..=matrix.ncols()).map(|j| j as u8).collect();
        Self::with_atoms(matrix, atoms, lambda, k_select)
    }

    fn with_atoms(matrix: Array2<f64>, atoms: Vec<u8>, lambda: f64, k_select: usize) -> Result<Self> {
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("basis matrix contains non-finite entries".into()));
        }
        if atoms.len() != matrix.ncols() {
            return Err(Error::shape(matrix.ncols(), atoms.len()));
        }
        if k_select == 0 || k_select > matrix.ncols() {
            return Err(Error::Validation(format!(
                "k_select must be in 1..={}, got {k_select}",
                matrix.ncols()
            )));
        }
        let lipschitz = largest_eigenvalue_ata(matrix.view());
        let mut b = SparseBasis {
            matrix,
            atoms,
            lambda: 0.0,
            k_select,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            lipschitz,
        };
        b.set_lambda(lambda)?;
        Ok(b)
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Validation(format!("lambda must be >= 0, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.matrix.ncols()
    }

    /// Largest eigenvalue of AᵀA (step size is its inverse).
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn objective(&self, y: ArrayView1<f64>, x: ArrayView1<f64>) -> f64 {
        let r = &y - &self.matrix.dot(&x);
        0.5 * r.dot(&r) + self.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn column_of(&self, z: u8) -> Option<usize> {
        self.atoms.iter().position(|&a| a == z)
    }

    /// `A_S c` for a code.
    pub fn reconstruct(&self, code: &SparseCode) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(self.n_bins());
        for (&z, &c) in code.indices.iter().zip(&code.coefficients) {
            let j = self
                .column_of(z)
                .ok_or_else(|| Error::Validation(format!("atom Z={z} not in basis")))?;
            out.scaled_add(c, &self.matrix.column(j));
        }
        Ok(out)
    }

    /// FISTA, top-k selection and refit for one spectrum.
    pub fn encode(&self, y: ArrayView1<f64>) -> Result<SparseCode> {
        let sol = fista_solve(self, y)?;
        let mut code = top_k_refit(self, y, sol.x.view())?;
        code.objective_history = sol.objective_history;
        Ok(code)
    }

    pub fn reconstruct_rows(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.n_bins() {
            return Err(Error::shape(format!("{} bins", self.n_bins()), rows.ncols()));
        }
        let mut out = Array2::zeros(rows.raw_dim());
        for (i, y) in rows.axis_iter(Axis(0)).enumerate() {
            let code = self.encode(y)?;
            out.row_mut(i).assign(&self.reconstruct(&code)?);
        }
        Ok(out)
    }
}

/// Column j = standardized LAC of element j+1.
pub fn build_basis(
    library: &ElementLibrary,
    grid: &EnergyGrid,
    stats: &StandardizationStats,
    lambda: f64,
    k_select: usize,
) -> Result<SparseBasis> {
    stats.validate()?;
    if stats.n_bins() != grid.n_bins() {
        return Err(Error::Incompatible(format!(
            "stats have {} bins, grid has {}",
            stats.n_bins(),
            grid.n_bins()
        )));
    }
    let lac = library.lac_matrix(grid)?;
    let mut matrix = Array2::zeros((grid.n_bins(), lac.nrows()));
    for (j, row) in lac.axis_iter(Axis(0)).enumerate() {
        matrix.column_mut(j).assign(&stats.standardize(row)?);
    }
    let atoms = (1..=MAX_Z).collect();
    SparseBasis::with_atoms(matrix, atoms, lambda, k_select)
}

/// Power iteration on AᵀA from the all-ones vector.
fn largest_eigenvalue_ata(a: ArrayView2<f64>) -> f64 {
    let n = a.ncols();
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let w = a.t().dot(&a.dot(&v));
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= POWER_ITER_TOL * next.abs() {
            return next.max(norm);
        }
        lambda = next;
    }
    lambda
}

/// Soft-thresholding `sign(v) · max(|v| − t, 0)`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Accelerated proximal gradient for the lasso with function-value
/// restart. Returns the iterate with the lowest objective;
/// `objective_history[k]` is the objective of the iterate kept after
/// iteration k+1.
pub fn fista_solve(basis: &SparseBasis, y: ArrayView1<f64>) -> Result<FistaSolution> {
    if y.len() != basis.n_bins() {
        return Err(Error::shape(format!("{} bins", basis.n_bins()), y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("FISTA input contains non-finite values".into()));
    }
    let n = basis.n_atoms();
    let a = &basis.matrix;
    if basis.lipschitz == 0.0 {
        return Ok(FistaSolution {
            x: Array1::zeros(n),
            objective_history: vec![basis.objective(y, Array1::zeros(n).view())],
        });
    }
    let step = 1.0 / basis.lipschitz;
    let thresh = basis.lambda * step;
    let aty = a.t().dot(&y);

    let mut x = Array1::<f64>::zeros(n);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut best = x.clone();
    let mut best_obj = f64::INFINITY;
    let mut history = Vec::new();
    let mut prev = f64::NAN;

    for _ in 0..basis.max_iters.max(1) {
        // gradient of ½‖y − Az‖² is Aᵀ(Az) − Aᵀy
        let grad = a.t().dot(&a.dot(&z)) - &aty;
        let x_next = Array1::from_iter(
            z.iter()
                .zip(grad.iter())
                .map(|(zi, gi)| soft_threshold(zi - step * gi, thresh)),
        );
        let obj = basis.objective(y, x_next.view());
        if !obj.is_finite() {
            return Err(Error::Numerical("FISTA objective became non-finite".into()));
        }
        if prev.is_finite() && obj > prev {
            // function-value restart: reject the step, drop the momentum and
            // take a plain proximal step from x next
            t = 1.0;
            z.assign(&x);
            history.push(prev);
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        z = &x_next + &((&x_next - &x) * momentum);
        x = x_next;
        t = t_next;
        history.push(obj);
        if obj < best_obj {
            best_obj = obj;
            best.assign(&x);
        }
        if prev.is_finite() && (prev - obj).abs() <= basis.tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        prev = obj;
    }
    Ok(FistaSolution {
        x: best,
        objective_history: history,
    })
}

/// Keeps the `k_select` largest |x_j| (ties to lower Z) and refits them by
/// least squares.
pub fn top_k_refit(basis: &SparseBasis, y: ArrayView1<f64>, x: ArrayView1<f64>) -> Result<SparseCode> {
    if x.len() != basis.n_atoms() {
        return Err(Error::shape(format!("{} coefficients", basis.n_atoms()), x.len()));
    }
    if y.len() != basis.n_bins() {
        return Err(Error::shape(format!("{} bins", basis.n_bins()), y.len()));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| {
        x[j].abs()
            .total_cmp(&x[i].abs())
            .then(basis.atoms[i].cmp(&basis.atoms[j]))
    });
    order.truncate(basis.k_select);
    order.sort_by_key(|&j| basis.atoms[j]);

    let restricted = basis.matrix.select(Axis(1), &order);
    let sol = lstsq(restricted.view(), y)?;
    Ok(SparseCode {
        indices: order.iter().map(|&j| basis.atoms[j]).collect(),
        coefficients: sol.x.to_vec(),
        objective_history: Vec::new(),
        rank_deficient: sol.rank_deficient,
    })
}

/// Grid search for λ minimizing mean NMSE of refit reconstructions of
/// `inputs` against `targets`. Ties keep the earliest candidate.
pub fn tune_lambda(
    basis: &SparseBasis,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    candidates: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::Validation("lambda candidate grid is empty".into()));
    }
    if inputs.dim() != targets.dim() {
        return Err(Error::shape(
            format!("{:?}", inputs.dim()),
            format!("{:?}", targets.dim()),
        ));
    }
    if inputs.nrows() == 0 {
        return Err(Error::Validation("no spectra to tune lambda on".into()));
    }
    if candidates.len() == 1 {
        return Ok((candidates[0], vec![f64::NAN]));
    }
    let mut trial = basis.clone();
    let mut scores = Vec::with_capacity(candidates.len());
    for &lambda in candidates {
        trial.set_lambda(lambda)?;
        let recon = trial.reconstruct_rows(inputs)?;
        let mut total = 0.0;
        for (t, r) in targets.axis_iter(Axis(0)).zip(recon.axis_iter(Axis(0))) {
            total += nmse(t, r)?;
        }
        let mean = total / inputs.nrows() as f64;
        log::debug!("lambda {lambda:e}: mean NMSE {mean:e}");
        scores.push(mean);
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok((candidates[best], scores))
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

impl Reconstructor for SparseBasis {
    fn input_len(&self) -> usize {
        self.n_bins()
    }

    fn reconstruct_rows(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        SparseBasis::reconstruct_rows(self, rows)
    }
}
