//! Two-component SVD subspace plus a three-node autoencoder on the
//! residual. A spectrum is coded by five numbers.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Reconstructor;
use crate::linear::{fit_svd, SvdModel};
use crate::neural::{init_network, train_denoising, Network, NetworkArch, TrainConfig, TrainHistory};
use crate::synth::{Dataset, StandardizationStats};

pub const HYBRID_SVD_RANK: usize = 2;
pub const HYBRID_LATENT_DIM: usize = 3;
pub const HYBRID_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    pub format_version: u32,
    pub svd: SvdModel,
    pub ae: Network,
    pub stats: StandardizationStats,
}

impl HybridModel {
    pub fn new(svd: SvdModel, ae: Network, stats: StandardizationStats) -> Result<Self> {
        if svd.rank != HYBRID_SVD_RANK || ae.latent_dim() != HYBRID_LATENT_DIM {
            return Err(Error::Validation(format!(
                "hybrid needs SVD rank {HYBRID_SVD_RANK} and latent {HYBRID_LATENT_DIM}, got {} and {}",
                svd.rank,
                ae.latent_dim()
            )));
        }
        if svd.grid_bins != ae.input_len() || stats.n_bins() != svd.grid_bins {
            return Err(Error::Incompatible(format!(
                "SVD has {} bins, autoencoder {}, stats {}",
                svd.grid_bins,
                ae.input_len(),
                stats.n_bins()
            )));
        }
        Ok(HybridModel {
            format_version: HYBRID_FORMAT_VERSION,
            svd,
            ae,
            stats,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.svd.grid_bins
    }

    fn residual(&self, rows: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let p = self.svd.project_rows(rows)?;
        let r = &rows - &p;
        Ok((p, r))
    }

    pub fn apply_rows(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (p, r) = self.residual(rows)?;
        Ok(p + self.ae.reconstruct(r.view())?)
    }

    /// Projection plus the autoencoder's reconstruction of the residual.
    pub fn apply(&self, spectrum: ArrayView1<f64>) -> Result<Array1<f64>> {
        let row = spectrum.insert_axis(Axis(0));
        Ok(self.apply_rows(row)?.row(0).to_owned())
    }

    /// `[svd coefficients; autoencoder code]` per row.
    pub fn encode_rows(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (_, r) = self.residual(rows)?;
        let c = rows.dot(&self.svd.basis);
        let z = self.ae.encode(r.view())?;
        Ok(concatenate![Axis(1), c, z])
    }

    pub fn decode_rows(&self, codes: ArrayView2<f64>) -> Result<Array2<f64>> {
        let want = HYBRID_SVD_RANK + HYBRID_LATENT_DIM;
        if codes.ncols() != want {
            return Err(Error::shape(format!("{want} code values"), codes.ncols()));
        }
        let p = codes.slice(s![.., ..HYBRID_SVD_RANK]).dot(&self.svd.basis.t());
        Ok(p + self.ae.decode(codes.slice(s![.., HYBRID_SVD_RANK..]))?)
    }
}

impl Reconstructor for HybridModel {
    fn input_len(&self) -> usize {
        self.n_bins()
    }

    fn reconstruct_rows(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.apply_rows(rows)
    }
}

fn check_compatible(a: &Dataset, b: &Dataset) -> Result<()> {
    if a.spec.grid != b.spec.grid || a.stats != b.stats {
        return Err(Error::Incompatible(format!(
            "datasets {} and {} differ in grid or standardization",
            a.spec.name, b.spec.name
        )));
    }
    Ok(())
}

/// Fits the SVD on clean spectra without K-edges, then trains the
/// autoencoder to map noisy residuals to clean residuals.
pub fn fit_hybrid(
    no_kedge: &Dataset,
    kedge_train: &Dataset,
    kedge_val: &Dataset,
    arch: &NetworkArch,
    config: &TrainConfig,
) -> Result<(HybridModel, TrainHistory)> {
    check_compatible(no_kedge, kedge_train)?;
    check_compatible(no_kedge, kedge_val)?;
    if arch.input_len != no_kedge.n_bins() || arch.latent_dim != HYBRID_LATENT_DIM {
        return Err(Error::Validation(format!(
            "hybrid autoencoder must map {} bins through {HYBRID_LATENT_DIM} latent values",
            no_kedge.n_bins()
        )));
    }
    let svd = fit_svd(no_kedge.clean.view(), HYBRID_SVD_RANK)?;
    let resid = |m: &Array2<f64>| -> Result<Array2<f64>> { Ok(m - &svd.project_rows(m.view())?) };
    let (tx, ty) = (resid(&kedge_train.noisy)?, resid(&kedge_train.clean)?);
    let (vx, vy) = (resid(&kedge_val.noisy)?, resid(&kedge_val.clean)?);
    let mut ae = init_network(arch, config.seed)?;
    let history = train_denoising(&mut ae, (tx.view(), ty.view()), (vx.view(), vy.view()), config)?;
    Ok((HybridModel::new(svd, ae, no_kedge.stats.clone())?, history))
}
