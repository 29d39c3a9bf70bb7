//! Elemental attenuation data and the photoelectric/Compton physics basis.
//!
//! Tables hold mass attenuation coefficients (cm²/g) sampled in keV. An
//! absorption edge is stored as two samples at the same energy, pre-edge
//! value first. Linear attenuation is `density · mac`, interpolated log–log
//! between samples and evaluated at bin centers.

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const ELECTRON_REST_ENERGY_KEV: f64 = 511.0;
/// Photoelectric scale constant in `a_p = rho_e · C_P · Z^m`.
pub const PHOTOELECTRIC_CONSTANT: f64 = 9.8e-24;
/// Empirical Z exponent in `a_p`.
pub const PHOTOELECTRIC_Z_EXPONENT: f64 = 3.8;
/// Energy exponent of the photoelectric basis `1 / E^n`.
pub const DEFAULT_PHOTOELECTRIC_EXPONENT: f64 = 3.0;
pub const MAX_Z: u8 = 92;

/// Equal-width energy bins on `[e_min, e_max]` (keV), represented by their centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct EnergyGrid {
    e_min: f64,
    e_max: f64,
    centers: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub e_min: f64,
    pub e_max: f64,
    pub n_bins: usize,
}

impl EnergyGrid {
    pub fn new(e_min: f64, e_max: f64, n_bins: usize) -> Result<Self> {
        if !(e_min.is_finite() && e_max.is_finite() && e_min < e_max) {
            return Err(Error::Validation(format!(
                "energy grid needs e_min < e_max, got [{e_min}, {e_max}]"
            )));
        }
        if n_bins < 2 {
            return Err(Error::Validation(format!("energy grid needs >= 2 bins, got {n_bins}")));
        }
        let width = (e_max - e_min) / n_bins as f64;
        let centers = (0..n_bins).map(|i| e_min + (i as f64 + 0.5) * width).collect();
        Ok(EnergyGrid { e_min, e_max, centers })
    }

    /// 26 bins of 5 keV over 20–150 keV.
    pub fn default_26() -> Self {
        Self::new(20.0, 150.0, 26).expect("default grid is valid")
    }

    /// 131 bins whose centers are the integer energies 20..=150 keV.
    pub fn integer_131() -> Self {
        Self::new(19.5, 150.5, 131).expect("131-bin grid is valid")
    }

    pub fn e_min(&self) -> f64 {
        self.e_min
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    pub fn n_bins(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            e_min: self.e_min,
            e_max: self.e_max,
            n_bins: self.n_bins(),
        }
    }
}

impl Default for EnergyGrid {
    fn default() -> Self {
        Self::default_26()
    }
}

impl TryFrom<GridSpec> for EnergyGrid {
    type Error = Error;

    fn try_from(s: GridSpec) -> Result<Self> {
        EnergyGrid::new(s.e_min, s.e_max, s.n_bins)
    }
}

impl From<EnergyGrid> for GridSpec {
    fn from(g: EnergyGrid) -> Self {
        g.spec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    PhysicalLacPerCm,
    Standardized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub units: Units,
}

impl Spectrum {
    pub fn physical(values: Vec<f64>) -> Self {
        Spectrum {
            values,
            units: Units::PhysicalLacPerCm,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationTable {
    pub z: u8,
    pub symbol: String,
    /// g/cm³
    pub density: f64,
    /// (energy keV, mac cm²/g), ascending; edges are adjacent duplicates.
    pub samples: Vec<(f64, f64)>,
}

impl AttenuationTable {
    pub fn new(z: u8, symbol: impl Into<String>, density: f64, samples: Vec<(f64, f64)>) -> Result<Self> {
        let t = AttenuationTable {
            z,
            symbol: symbol.into(),
            density,
            samples,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_Z).contains(&self.z) {
            return Err(Error::Range(format!("atomic number {} outside 1..=92", self.z)));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::Validation(format!(
                "Z={}: density must be positive, got {}",
                self.z, self.density
            )));
        }
        if self.samples.len() < 2 {
            return Err(Error::Validation(format!("Z={}: need at least 2 samples", self.z)));
        }
        for (i, &(e, m)) in self.samples.iter().enumerate() {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Validation(format!("Z={}: bad energy {e} at sample {i}", self.z)));
            }
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Validation(format!(
                    "Z={}: MAC must be positive, got {m} at {e} keV",
                    self.z
                )));
            }
        }
        for (i, w) in self.samples.windows(2).enumerate() {
            let ((e0, m0), (e1, m1)) = (w[0], w[1]);
            if e1 < e0 {
                return Err(Error::Validation(format!(
                    "Z={}: energies out of order at sample {} ({e1} < {e0})",
                    self.z,
                    i + 1
                )));
            }
            if e1 == e0 {
                if m1 <= m0 {
                    return Err(Error::Validation(format!(
                        "Z={}: edge at {e0} keV must increase MAC ({m0} -> {m1})",
                        self.z
                    )));
                }
                if i + 2 < self.samples.len() && self.samples[i + 2].0 == e0 {
                    return Err(Error::Validation(format!(
                        "Z={}: more than two samples at {e0} keV",
                        self.z
                    )));
                }
            }
        }
        Ok(())
    }

    /// Energies (keV) at which the table has an absorption edge.
    pub fn edges(&self) -> Vec<f64> {
        self.samples
            .windows(2)
            .filter(|w| w[0].0 == w[1].0)
            .map(|w| w[0].0)
            .collect()
    }

    /// The K-edge is the highest-energy edge in the table, if any.
    pub fn k_edge(&self) -> Option<f64> {
        self.edges().into_iter().reduce(f64::max)
    }

    pub fn energy_range(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    /// Log–log interpolated MAC. Exactly at an edge energy the post-edge
    /// value is returned.
    pub fn mac_at(&self, e: f64) -> Result<f64> {
        let (lo, hi) = self.energy_range();
        if !(e >= lo && e <= hi) {
            return Err(Error::Range(format!(
                "Z={}: energy {e} keV outside tabulated range [{lo}, {hi}]",
                self.z
            )));
        }
        // Last sample with energy <= e; for an edge this is the post-edge row.
        let i = self.samples.partition_point(|&(x, _)| x <= e) - 1;
        let (e0, m0) = self.samples[i];
        if e == e0 || i + 1 == self.samples.len() {
            return Ok(m0);
        }
        let (e1, m1) = self.samples[i + 1];
        let t = (e / e0).ln() / (e1 / e0).ln();
        Ok((m0.ln() + t * (m1 / m0).ln()).exp())
    }
}

/// Element tables for Z = 1..=92 plus the density listing.
#[derive(Debug, Clone)]
pub struct ElementLibrary {
    tables: Vec<AttenuationTable>,
}

#[derive(Debug, Clone, Deserialize)]
struct DensityRow {
    z: u8,
    symbol: String,
    density_g_per_cm3: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct SampleRow {
    energy_kev: f64,
    mac_cm2_per_g: f64,
}

/// Densities file: `z,symbol,density_g_per_cm3`.
pub fn load_densities(path: &Path) -> Result<Vec<(u8, String, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<DensityRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if !(1..=MAX_Z).contains(&row.z) {
            return Err(Error::Range(format!("density row for Z={} outside 1..=92", row.z)));
        }
        out.push((row.z, row.symbol, row.density_g_per_cm3));
    }
    Ok(out)
}

/// Parses `z{ZZ}.csv`; the atomic number comes from the file name and the
/// density from `densities`.
pub fn load_attenuation_table(path: &Path, densities: &[(u8, String, f64)]) -> Result<AttenuationTable> {
    let z = parse_z_from_path(path)?;
    let (_, symbol, density) = densities
        .iter()
        .find(|(dz, _, _)| *dz == z)
        .ok_or_else(|| Error::Validation(format!("no density listed for Z={z}")))?;
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["energy_kev", "mac_cm2_per_g"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header energy_kev,mac_cm2_per_g, got {:?}", headers),
        });
    }
    let mut samples = Vec::new();
    for row in reader.deserialize::<SampleRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        samples.push((row.energy_kev, row.mac_cm2_per_g));
    }
    AttenuationTable::new(z, symbol.clone(), *density, samples)
}

fn parse_z_from_path(path: &Path) -> Result<u8> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let z: u32 = stem
        .strip_prefix('z')
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "element file must be named z{ZZ}.csv".into(),
        })?;
    if !(1..=MAX_Z as u32).contains(&z) {
        return Err(Error::Range(format!("atomic number {z} outside 1..=92")));
    }
    Ok(z as u8)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

impl ElementLibrary {
    /// Loads `densities.csv` and all of `z01.csv`..`z92.csv` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let densities = load_densities(&dir.join("densities.csv"))?;
        let mut tables = Vec::with_capacity(MAX_Z as usize);
        for z in 1..=MAX_Z {
            let path = element_path(dir, z);
            if !path.exists() {
                let symbol = densities
                    .iter()
                    .find(|(dz, _, _)| *dz == z)
                    .map(|(_, s, _)| s.clone())
                    .unwrap_or_default();
                return Err(Error::MissingElement { z, symbol });
            }
            tables.push(load_attenuation_table(&path, &densities)?);
        }
        Ok(ElementLibrary { tables })
    }

    pub fn from_tables(mut tables: Vec<AttenuationTable>) -> Result<Self> {
        tables.sort_by_key(|t| t.z);
        for (i, t) in tables.iter().enumerate() {
            if t.z as usize != i + 1 {
                let z = (i + 1) as u8;
                return Err(Error::MissingElement {
                    z,
                    symbol: String::new(),
                });
            }
        }
        if tables.len() != MAX_Z as usize {
            return Err(Error::MissingElement {
                z: tables.len() as u8 + 1,
                symbol: String::new(),
            });
        }
        Ok(ElementLibrary { tables })
    }

    pub fn get(&self, z: u8) -> Result<&AttenuationTable> {
        self.tables
            .get((z as usize).wrapping_sub(1))
            .ok_or_else(|| Error::MissingElement {
                z,
                symbol: String::new(),
            })
    }

    pub fn tables(&self) -> &[AttenuationTable] {
        &self.tables
    }

    /// 92 × n_bins matrix of physical LACs, row z-1 for element z.
    pub fn lac_matrix(&self, grid: &EnergyGrid) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((self.tables.len(), grid.n_bins()));
        for (i, t) in self.tables.iter().enumerate() {
            let s = lac_on_grid(t, grid)?;
            out.row_mut(i).assign(&Array1::from(s.values));
        }
        Ok(out)
    }

    /// Atomic numbers whose K-edge lies strictly inside the grid range.
    pub fn k_edge_elements(&self, grid: &EnergyGrid) -> Vec<u8> {
        self.tables
            .iter()
            .filter(|t| has_k_edge_in(t, grid))
            .map(|t| t.z)
            .collect()
    }
}

pub fn element_path(dir: &Path, z: u8) -> PathBuf {
    dir.join(format!("z{z:02}.csv"))
}

pub fn has_k_edge_in(table: &AttenuationTable, grid: &EnergyGrid) -> bool {
    table.k_edge().is_some_and(|k| k > grid.e_min() && k < grid.e_max())
}

/// Physical LAC (1/cm) of one element at the grid's bin centers.
pub fn lac_on_grid(table: &AttenuationTable, grid: &EnergyGrid) -> Result<Spectrum> {
    let values = grid
        .centers()
        .iter()
        .map(|&e| table.mac_at(e).map(|m| table.density * m))
        .collect::<Result<Vec<_>>>()?;
    Ok(Spectrum::physical(values))
}

/// Indices `i` where `values[i + 1] > values[i]`.
pub fn upward_jumps(values: &[f64]) -> Vec<usize> {
    values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0])
        .map(|(i, _)| i)
        .collect()
}

/// Klein–Nishina energy dependence with `alpha = e / 511 keV`.
pub fn klein_nishina(e: f64) -> Result<f64> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::Domain(format!("Klein-Nishina needs e > 0, got {e}")));
    }
    let a = e / ELECTRON_REST_ENERGY_KEV;
    let l = (1.0 + 2.0 * a).ln();
    let d = 1.0 + 2.0 * a;
    Ok((1.0 + a) / (a * a) * (2.0 * (1.0 + a) / d - l / a) + l / (2.0 * a) - (1.0 + 3.0 * a) / (d * d))
}

/// Photoelectric energy dependence `1 / e^n`.
pub fn photoelectric_basis(e: f64, n: f64) -> Result<f64> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::Domain(format!("photoelectric basis needs e > 0, got {e}")));
    }
    if !(n > 0.0) {
        return Err(Error::Domain(format!("photoelectric exponent must be > 0, got {n}")));
    }
    Ok(e.powf(-n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcbCoefficients {
    pub a_p: f64,
    pub a_c: f64,
}

impl fmt::Display for PcbCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a_p={:e} a_c={:e}", self.a_p, self.a_c)
    }
}

/// Single-material PCB weights from electron density and atomic number.
pub fn pcb_coefficients(rho_e: f64, z: u8) -> Result<PcbCoefficients> {
    if !(rho_e > 0.0 && rho_e.is_finite()) {
        return Err(Error::Domain(format!("electron density must be > 0, got {rho_e}")));
    }
    if !(1..=MAX_Z).contains(&z) {
        return Err(Error::Range(format!("atomic number {z} outside 1..=92")));
    }
    Ok(PcbCoefficients {
        a_p: rho_e * PHOTOELECTRIC_CONSTANT * (z as f64).powf(PHOTOELECTRIC_Z_EXPONENT),
        a_c: rho_e,
    })
}

/// N × 2 design matrix `[f_p(E), f_KN(E)]` at the grid centers.
pub fn pcb_design(grid: &EnergyGrid, n: f64) -> Result<Array2<f64>> {
    let mut a = Array2::zeros((grid.n_bins(), 2));
    for (i, &e) in grid.centers().iter().enumerate() {
        a[[i, 0]] = photoelectric_basis(e, n)?;
        a[[i, 1]] = klein_nishina(e)?;
    }
    Ok(a)
}

/// Least-squares fit of a physical spectrum onto the two PCB basis functions.
pub fn fit_pcb(spectrum: &Spectrum, grid: &EnergyGrid, n: f64) -> Result<(PcbCoefficients, Spectrum)> {
    if spectrum.units != Units::PhysicalLacPerCm {
        return Err(Error::Validation("PCB fit requires a physical spectrum".into()));
    }
    if spectrum.len() != grid.n_bins() {
        return Err(Error::shape(grid.n_bins(), spectrum.len()));
    }
    let a = pcb_design(grid, n)?;
    // Columns differ by ~6 orders of magnitude; equilibrate before solving.
    let scale: Vec<f64> = (0..2).map(|j| a.column(j).dot(&a.column(j)).sqrt()).collect();
    let mut a_scaled = a.clone();
    for j in 0..2 {
        a_scaled.column_mut(j).mapv_inplace(|x| x / scale[j]);
    }
    let y = Array1::from(spectrum.values.clone());
    let sol = linalg::lstsq(a_scaled.view(), y.view())?;
    if sol.rank_deficient {
        return Err(Error::Numerical(
            "PCB design matrix is rank deficient on this grid".into(),
        ));
    }
    let coeffs = PcbCoefficients {
        a_p: sol.x[0] / scale[0],
        a_c: sol.x[1] / scale[1],
    };
    let fitted = a.dot(&Array1::from(vec![coeffs.a_p, coeffs.a_c]));
    Ok((coeffs, Spectrum::physical(fitted.to_vec())))
}
