//! Synthetic mixture datasets.
//!
//! Each object is a weighted sum of elemental LACs. Elements are drawn
//! without replacement, optionally with a fixed number taken from the
//! K-edge class (K-edge strictly inside the grid range). Spectra are
//! standardized per energy bin and then corrupted with Gaussian noise.
//!
//! Row `r` uses ChaCha8 stream `2r` for its mixture and `2r + 1` for its
//! noise, so every row is reproducible on its own.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attenuation::{lac_on_grid, ElementLibrary, EnergyGrid, Spectrum};
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;
pub const MAX_ELEMENTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KEdgeRule {
    Unconstrained,
    Exactly(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    /// (atomic number, weight in (0, 1])
    pub components: Vec<(u8, f64)>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.components.len();
        if !(1..=MAX_ELEMENTS).contains(&n) {
            return Err(Error::Validation(format!("mixture needs 1-5 components, got {n}")));
        }
        for (i, &(z, w)) in self.components.iter().enumerate() {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::Validation(format!("weight {w} for Z={z} outside (0, 1]")));
            }
            if self.components[..i].iter().any(|&(other, _)| other == z) {
                return Err(Error::Validation(format!("duplicate Z={z} in mixture")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub n_elements: usize,
    pub n_objects: usize,
    pub k_edge_rule: KEdgeRule,
    #[serde(default)]
    pub grid: EnergyGrid,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    pub seed: u64,
}

fn default_noise_sigma() -> f64 {
    DEFAULT_NOISE_SIGMA
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_ELEMENTS).contains(&self.n_elements) {
            return Err(Error::Validation(format!(
                "{}: n_elements must be 1-5, got {}",
                self.name, self.n_elements
            )));
        }
        if self.n_objects == 0 {
            return Err(Error::Validation(format!("{}: n_objects must be >= 1", self.name)));
        }
        if let KEdgeRule::Exactly(k) = self.k_edge_rule {
            if k > self.n_elements {
                return Err(Error::Unsatisfiable(format!(
                    "{}: {k} K-edge elements requested out of {}",
                    self.name, self.n_elements
                )));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Validation(format!("{}: noise_sigma must be >= 0", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    /// Per-column mean and population standard deviation.
    pub fn from_rows(data: &Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Validation("cannot compute statistics of zero rows".into()));
        }
        let mean = data.mean_axis(Axis(0)).expect("non-empty");
        let std = data.std_axis(Axis(0), 0.0);
        let stats = StandardizationStats {
            mean: mean.to_vec(),
            std: std.to_vec(),
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn identity(n_bins: usize) -> Self {
        StandardizationStats {
            mean: vec![0.0; n_bins],
            std: vec![1.0; n_bins],
        }
    }

    pub fn n_bins(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::shape(self.mean.len(), self.std.len()));
        }
        if let Some(i) = self.std.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Validation(format!(
                "degenerate energy bin {i}: standard deviation {}",
                self.std[i]
            )));
        }
        Ok(())
    }

    pub fn standardize(&self, values: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_len(values.len())?;
        Ok(Array1::from_iter(
            values
                .iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(x, (m, s))| (x - m) / s),
        ))
    }

    pub fn destandardize(&self, values: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_len(values.len())?;
        Ok(Array1::from_iter(
            values
                .iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(x, (m, s))| x * s + m),
        ))
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.n_bins() {
            return Err(Error::shape(format!("{} bins", self.n_bins()), n));
        }
        Ok(())
    }
}

/// Atomic numbers split by whether their K-edge is inside the grid range.
#[derive(Debug, Clone)]
pub struct ElementClasses {
    pub k_edge: Vec<u8>,
    pub no_k_edge: Vec<u8>,
}

impl ElementClasses {
    pub fn new(library: &ElementLibrary, grid: &EnergyGrid) -> Self {
        let k_edge = library.k_edge_elements(grid);
        let no_k_edge = library
            .tables()
            .iter()
            .map(|t| t.z)
            .filter(|z| !k_edge.contains(z))
            .collect();
        ElementClasses { k_edge, no_k_edge }
    }

    pub fn all(&self) -> Vec<u8> {
        let mut all: Vec<u8> = self.k_edge.iter().chain(&self.no_k_edge).copied().collect();
        all.sort_unstable();
        all
    }

    fn check(&self, n_elements: usize, rule: KEdgeRule) -> Result<()> {
        let ok = match rule {
            KEdgeRule::Unconstrained => n_elements <= self.k_edge.len() + self.no_k_edge.len(),
            KEdgeRule::Exactly(k) => {
                k <= n_elements && k <= self.k_edge.len() && n_elements - k <= self.no_k_edge.len()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Unsatisfiable(format!(
                "{n_elements} elements with rule {rule:?} ({} K-edge, {} other elements available)",
                self.k_edge.len(),
                self.no_k_edge.len()
            )))
        }
    }
}

/// Draws distinct elements (uniformly within their class) and weights in (0, 1].
pub fn sample_mixture<R: Rng>(
    rng: &mut R,
    n_elements: usize,
    rule: KEdgeRule,
    classes: &ElementClasses,
) -> Result<MixtureSpec> {
    if !(1..=MAX_ELEMENTS).contains(&n_elements) {
        return Err(Error::Validation(format!("n_elements must be 1-5, got {n_elements}")));
    }
    classes.check(n_elements, rule)?;
    let mut zs: Vec<u8> = Vec::with_capacity(n_elements);
    match rule {
        KEdgeRule::Unconstrained => {
            let all = classes.all();
            zs.extend(index::sample(rng, all.len(), n_elements).iter().map(|i| all[i]));
        }
        KEdgeRule::Exactly(k) => {
            zs.extend(
                index::sample(rng, classes.k_edge.len(), k)
                    .iter()
                    .map(|i| classes.k_edge[i]),
            );
            zs.extend(
                index::sample(rng, classes.no_k_edge.len(), n_elements - k)
                    .iter()
                    .map(|i| classes.no_k_edge[i]),
            );
        }
    }
    let components = zs.into_iter().map(|z| (z, 1.0 - rng.random::<f64>())).collect();
    Ok(MixtureSpec { components })
}

/// Weighted sum of elemental LACs, physical units.
pub fn mix_spectrum(spec: &MixtureSpec, library: &ElementLibrary, grid: &EnergyGrid) -> Result<Spectrum> {
    let mut values = vec![0.0; grid.n_bins()];
    for &(z, w) in &spec.components {
        let lac = lac_on_grid(library.get(z)?, grid)?;
        for (v, l) in values.iter_mut().zip(&lac.values) {
            *v += w * l;
        }
    }
    Ok(Spectrum::physical(values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    /// n_objects × n_bins, standardized.
    pub clean: Array2<f64>,
    /// `clean` plus the recorded noise draws.
    pub noisy: Array2<f64>,
    pub mixtures: Vec<MixtureSpec>,
    pub stats: StandardizationStats,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.clean.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.clean.ncols()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut spec = self.spec.clone();
        spec.n_objects = rows.len();
        Dataset {
            spec,
            clean: self.clean.select(Axis(0), rows),
            noisy: self.noisy.select(Axis(0), rows),
            mixtures: rows.iter().map(|&r| self.mixtures[r].clone()).collect(),
            stats: self.stats.clone(),
        }
    }

    /// Clean spectra mapped back to physical units.
    pub fn physical_clean(&self) -> Result<Array2<f64>> {
        let mut out = self.clean.clone();
        for mut row in out.rows_mut() {
            let back = self.stats.destandardize(row.view())?;
            row.assign(&back);
        }
        Ok(out)
    }
}

fn row_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates, standardizes and noise-corrupts `spec.n_objects` mixtures.
///
/// Statistics come from `stats_source` when given, otherwise from this
/// dataset's own clean spectra.
pub fn build_dataset(
    spec: &DatasetSpec,
    library: &ElementLibrary,
    stats_source: Option<&StandardizationStats>,
) -> Result<Dataset> {
    spec.validate()?;
    let grid = &spec.grid;
    let classes = ElementClasses::new(library, grid);
    classes.check(spec.n_elements, spec.k_edge_rule)?;
    let lac = library.lac_matrix(grid)?;

    let n = spec.n_objects;
    let mut physical = Array2::<f64>::zeros((n, grid.n_bins()));
    let mut mixtures = Vec::with_capacity(n);
    for r in 0..n {
        let mut rng = row_rng(spec.seed, 2 * r as u64);
        let mix = sample_mixture(&mut rng, spec.n_elements, spec.k_edge_rule, &classes)?;
        let mut row = physical.row_mut(r);
        for &(z, w) in &mix.components {
            row.scaled_add(w, &lac.row(z as usize - 1));
        }
        mixtures.push(mix);
    }

    let stats = match stats_source {
        Some(s) => {
            s.validate()?;
            if s.n_bins() != grid.n_bins() {
                return Err(Error::Incompatible(format!(
                    "{}: stats have {} bins, grid has {}",
                    spec.name,
                    s.n_bins(),
                    grid.n_bins()
                )));
            }
            s.clone()
        }
        None => StandardizationStats::from_rows(&physical)?,
    };

    let mut clean = physical;
    for mut row in clean.rows_mut() {
        for ((x, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *x = (*x - m) / s;
        }
    }

    let mut noisy = clean.clone();
    if spec.noise_sigma > 0.0 {
        let normal =
            Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Validation(format!("noise distribution: {e}")))?;
        for (r, mut row) in noisy.rows_mut().into_iter().enumerate() {
            let mut rng = row_rng(spec.seed, 2 * r as u64 + 1);
            for x in row.iter_mut() {
                *x += normal.sample(&mut rng);
            }
        }
    }

    Ok(Dataset {
        spec: spec.clone(),
        clean,
        noisy,
        mixtures,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub seed: u64,
    pub fractions: (f64, f64, f64),
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub indices: SplitIndices,
}

/// Row partition of `n` for `(train, val, test)` fractions. Validation and
/// test sizes are floored; the remainder goes to training.
pub fn split_indices(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<SplitIndices> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(*f >= 0.0 && f.is_finite())) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "split fractions must be non-negative and sum to 1, got {fractions:?}"
        )));
    }
    let n_val = (n as f64 * fv).floor() as usize;
    let n_test = (n as f64 * fs).floor() as usize;
    let n_train = n.saturating_sub(n_val + n_test);
    for (name, size) in [("train", n_train), ("val", n_val), ("test", n_test)] {
        if size == 0 {
            return Err(Error::EmptySplit(name));
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = perm[n_train..n_train + n_val].to_vec();
    let test = perm[n_train + n_val..].to_vec();
    perm.truncate(n_train);
    Ok(SplitIndices {
        seed,
        fractions,
        train: perm,
        val,
        test,
    })
}

pub fn split_dataset(d: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<DatasetSplit> {
    let indices = split_indices(d.n_rows(), fractions, seed)?;
    Ok(apply_split(d, indices))
}

pub fn apply_split(d: &Dataset, indices: SplitIndices) -> DatasetSplit {
    DatasetSplit {
        train: d.subset(&indices.train),
        val: d.subset(&indices.val),
        test: d.subset(&indices.test),
        indices,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format_version: u32,
    spec: DatasetSpec,
    stats: StandardizationStats,
    seed: u64,
}

/// Shortest decimal that round-trips to the same `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut s = String::with_capacity(m.len() * 22);
    for row in m.rows() {
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            s.push_str(&fmt_f64(*x));
        }
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn read_matrix_csv(path: &Path, n_cols: usize) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let before = data.len();
        for tok in line.split(',') {
            data.push(tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        if data.len() - before != n_cols {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {n_cols} values, got {}", data.len() - before),
            });
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, n_cols), data).map_err(|e| Error::Validation(e.to_string()))
}

pub fn format_mixture(m: &MixtureSpec) -> String {
    let mut s = String::new();
    for (i, (z, w)) in m.components.iter().enumerate() {
        if i > 0 {
            s.push(';');
        }
        let _ = write!(s, "{z}:{}", fmt_f64(*w));
    }
    s
}

pub fn parse_mixture(s: &str) -> Option<MixtureSpec> {
    let components = s
        .split(';')
        .map(|part| {
            let (z, w) = part.split_once(':')?;
            Some((z.parse().ok()?, w.parse().ok()?))
        })
        .collect::<Option<Vec<_>>>()?;
    Some(MixtureSpec { components })
}

/// Writes `header.json`, `clean.csv`, `noisy.csv` and `mixtures.csv` into `dir`.
pub fn write_dataset(d: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = DatasetHeader {
        format_version: DATASET_FORMAT_VERSION,
        spec: d.spec.clone(),
        stats: d.stats.clone(),
        seed: d.spec.seed,
    };
    write_json(&dir.join("header.json"), &header)?;
    write_matrix_csv(&dir.join("clean.csv"), &d.clean)?;
    write_matrix_csv(&dir.join("noisy.csv"), &d.noisy)?;
    let path = dir.join("mixtures.csv");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut s = String::from("row,components\n");
    for (r, m) in d.mixtures.iter().enumerate() {
        let _ = writeln!(s, "{r},{}", format_mixture(m));
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(&path, e))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let header: DatasetHeader = read_json(&dir.join("header.json"))?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "unsupported dataset format version {}",
            header.format_version
        )));
    }
    let n_bins = header.spec.grid.n_bins();
    let clean = read_matrix_csv(&dir.join("clean.csv"), n_bins)?;
    let noisy = read_matrix_csv(&dir.join("noisy.csv"), n_bins)?;
    let path = dir.join("mixtures.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut mixtures = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let m = line
            .split_once(',')
            .and_then(|(_, rest)| parse_mixture(rest))
            .ok_or_else(|| Error::Parse {
                path: path.clone(),
                line: i + 1,
                message: "expected row,z:weight;...".into(),
            })?;
        mixtures.push(m);
    }
    if clean.nrows() != header.spec.n_objects || noisy.nrows() != clean.nrows() || mixtures.len() != clean.nrows() {
        return Err(Error::Validation(format!(
            "dataset {} row counts disagree with n_objects = {}",
            header.spec.name, header.spec.n_objects
        )));
    }
    Ok(Dataset {
        spec: header.spec,
        clean,
        noisy,
        mixtures,
        stats: header.stats,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}
