//! Rank-k SVD subspace model of standardized spectra.
//!
//! No mean is removed inside the model; inputs are already standardized.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Reconstructor;
use crate::linalg::jacobi_svd;

pub const SVD_MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdModel {
    pub rank: usize,
    /// n_bins × rank, orthonormal columns; each column's largest-magnitude
    /// entry is positive.
    pub basis: Array2<f64>,
    /// All min(m, n_bins) singular values of the training matrix, descending.
    pub singular_values: Vec<f64>,
    pub grid_bins: usize,
}

pub fn fit_svd(data: ArrayView2<f64>, rank: usize) -> Result<SvdModel> {
    let (m, n) = data.dim();
    if rank == 0 || rank > m.min(n) {
        return Err(Error::Validation(format!(
            "rank {rank} must be in 1..={} for a {m}×{n} matrix",
            m.min(n)
        )));
    }
    let svd = jacobi_svd(data)?;
    let mut basis = svd.v.slice(ndarray::s![.., ..rank]).to_owned();
    canonicalize_signs(&mut basis);
    Ok(SvdModel {
        rank,
        basis,
        singular_values: svd.singular_values,
        grid_bins: n,
    })
}

/// Flip each column so that its entry of largest magnitude is positive
/// (first such entry on ties).
pub fn canonicalize_signs(basis: &mut Array2<f64>) {
    for mut col in basis.columns_mut() {
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

impl SvdModel {
    pub fn encode(&self, spectrum: ArrayView1<f64>) -> Result<Array1<f64>> {
        if spectrum.len() != self.grid_bins {
            return Err(Error::shape(format!("{} bins", self.grid_bins), spectrum.len()));
        }
        Ok(self.basis.t().dot(&spectrum))
    }

    pub fn decode(&self, coefficients: ArrayView1<f64>) -> Result<Array1<f64>> {
        if coefficients.len() != self.rank {
            return Err(Error::shape(format!("{} coefficients", self.rank), coefficients.len()));
        }
        Ok(self.basis.dot(&coefficients))
    }

    /// Orthogonal projection onto the basis span.
    pub fn project(&self, spectrum: ArrayView1<f64>) -> Result<Array1<f64>> {
        let c = self.encode(spectrum)?;
        self.decode(c.view())
    }

    /// Row-wise projection of a batch.
    pub fn project_rows(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.grid_bins {
            return Err(Error::shape(format!("{} bins", self.grid_bins), rows.ncols()));
        }
        Ok(rows.dot(&self.basis).dot(&self.basis.t()))
    }

    /// Σ_{i > rank} σᵢ²: the training reconstruction error of this rank.
    pub fn tail_energy(&self) -> f64 {
        self.singular_values.iter().skip(self.rank).map(|s| s * s).sum()
    }

    pub fn to_file(&self) -> SvdModelFile {
        SvdModelFile {
            format_version: SVD_MODEL_FORMAT_VERSION,
            rank: self.rank,
            grid_bins: self.grid_bins,
            basis: self.basis.axis_iter(Axis(0)).map(|r| r.to_vec()).collect(),
            singular_values: self.singular_values.clone(),
        }
    }

    pub fn from_file(f: SvdModelFile) -> Result<Self> {
        if f.format_version != SVD_MODEL_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported svd model version {}",
                f.format_version
            )));
        }
        if f.basis.len() != f.grid_bins || f.basis.iter().any(|r| r.len() != f.rank) {
            return Err(Error::shape(
                format!("{}×{} basis", f.grid_bins, f.rank),
                "ragged or mis-sized rows",
            ));
        }
        let flat: Vec<f64> = f.basis.into_iter().flatten().collect();
        let basis =
            Array2::from_shape_vec((f.grid_bins, f.rank), flat).map_err(|e| Error::Validation(e.to_string()))?;
        Ok(SvdModel {
            rank: f.rank,
            basis,
            singular_values: f.singular_values,
            grid_bins: f.grid_bins,
        })
    }
}

/// On-disk form (`svd_model.json`); `basis` is row-major, one row per bin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvdModelFile {
    pub format_version: u32,
    pub rank: usize,
    pub grid_bins: usize,
    pub basis: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
}

impl Serialize for SvdModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SvdModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = SvdModelFile::deserialize(d)?;
        SvdModel::from_file(f).map_err(serde::de::Error::custom)
    }
}

impl Reconstructor for SvdModel {
    fn input_len(&self) -> usize {
        self.grid_bins
    }

    fn reconstruct_rows(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.project_rows(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rank_one_data() {
        let v = array![0.6, -0.8, 0.0];
        let data = Array2::from_shape_fn((5, 3), |(_, j)| v[j]);
        let model = fit_svd(data.view(), 1).unwrap();
        let col = model.basis.column(0);
        let dot = col.dot(&v);
        assert!((dot.abs() - 1.0).abs() < 1e-12);
        // largest-magnitude entry (-0.8) made positive
        assert!(col[1] > 0.0);
        assert!(model.singular_values[1].abs() < 1e-12);
    }

    #[test]
    fn diagonal_case() {
        let data = array![[3.0, 0.0], [0.0, 2.0], [0.0, 0.0]];
        let model = fit_svd(data.view(), 2).unwrap();
        assert_eq!(model.singular_values, vec![3.0, 2.0]);
        assert_eq!(model.basis, array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn rank_too_large() {
        let data = array![[3.0, 0.0], [0.0, 2.0], [0.0, 0.0]];
        assert!(fit_svd(data.view(), 3).is_err());
        assert!(fit_svd(data.view(), 0).is_err());
    }

    #[test]
    fn encode_decode_basics() {
        let data = array![[1.0, 2.0, 0.5], [0.0, 1.0, 3.0], [2.0, 0.0, 1.0], [1.0, 1.0, 1.0]];
        let model = fit_svd(data.view(), 2).unwrap();
        let e1 = model.encode(model.basis.column(1)).unwrap();
        assert!((e1[0]).abs() < 1e-12 && (e1[1] - 1.0).abs() < 1e-12);
        assert_eq!(model.encode(Array1::zeros(3).view()).unwrap(), Array1::<f64>::zeros(2));
        assert_eq!(model.decode(Array1::zeros(2).view()).unwrap(), Array1::<f64>::zeros(3));
        assert!(model.encode(Array1::zeros(4).view()).is_err());
        assert!(model.decode(Array1::zeros(3).view()).is_err());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let data = array![[1.0, 2.0, 0.5], [0.0, 1.0, 3.0], [2.0, 0.0, 1.0], [1.0, 1.0, 1.0]];
        let model = fit_svd(data.view(), 2).unwrap();
        let text = serde_json::to_string(&model).unwrap();
        let back: SvdModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model);
    }
}
