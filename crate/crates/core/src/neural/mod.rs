//! Small sequential neural-network engine for spectral autoencoders.
//!
//! A [`Network`] is a flat list of [`Layer`]s with one designated code
//! layer. Gradients are computed by explicit backward passes; there is no
//! general autograd.

pub mod arch;
pub mod layers;
pub mod train;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Reconstructor;

pub use arch::{init_network, ArchKind, NetworkArch};
pub use layers::{BatchNorm, Conv1d, ConvTranspose1d, Dense, Layer, MaxPool1d, Mode, Relu, Upsample};
pub use train::{adam_step, mse_loss, train_denoising, AdamState, TrainConfig, TrainHistory};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Network {
    arch: NetworkArch,
    layers: Vec<Layer>,
    /// Index of the layer whose output is the code.
    latent_layer: usize,
    /// Bumped on every parameter mutation; caches record it.
    version: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.layers == other.layers && self.latent_layer == other.latent_layer
    }
}

/// Intermediates from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    batch: usize,
    /// `acts[i]` is the input to layer `i`.
    acts: Vec<Vec<f64>>,
    caches: Vec<layers::LayerCache>,
}

impl ForwardCache {
    /// Input to each layer, flattened `batch × width`.
    pub fn layer_inputs(&self) -> &[Vec<f64>] {
        &self.acts
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Parameter gradients, one block per entry of [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Network {
    /// Assembles a network after checking that widths chain from
    /// `arch.input_len` back to `arch.input_len` through a `latent_dim` code.
    pub fn from_layers(arch: NetworkArch, layers: Vec<Layer>, latent_layer: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("network has no layers".into()));
        }
        let mut width = arch.input_len;
        for (i, l) in layers.iter().enumerate() {
            if l.in_width() != width {
                return Err(Error::shape(
                    format!("layer {i} ({}) input width {width}", l.name()),
                    l.in_width(),
                ));
            }
            width = l.out_width();
        }
        if width != arch.input_len {
            return Err(Error::shape(format!("output width {}", arch.input_len), width));
        }
        match layers.get(latent_layer) {
            Some(l) if l.out_width() == arch.latent_dim => {}
            _ => {
                return Err(Error::Validation(format!(
                    "layer {latent_layer} does not produce a {}-value code",
                    arch.latent_dim
                )))
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(Error::Validation(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Network {
            arch,
            layers,
            latent_layer,
            version: 0,
        })
    }

    pub fn arch(&self) -> &NetworkArch {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn latent_layer(&self) -> usize {
        self.latent_layer
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    /// Mutable parameter blocks; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn run(&self, x: ArrayView2<f64>, mode: Mode, range: std::ops::Range<usize>, keep: bool) -> Result<Run> {
        let b = x.nrows();
        let expected = self.layers[range.start].in_width();
        if x.ncols() != expected {
            return Err(Error::shape(format!("{expected} columns"), x.ncols()));
        }
        let mut cur: Vec<f64> = x.iter().copied().collect();
        let mut run = Run::default();
        for i in range {
            let (y, cache, stats) = self.layers[i].forward(&cur, b, mode);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: i });
            }
            if let Some(s) = stats {
                run.bn_stats.push((i, s));
            }
            if keep {
                run.acts.push(cur);
                run.caches.push(cache);
            }
            cur = y;
        }
        run.output = cur;
        Ok(run)
    }

    fn to_matrix(&self, b: usize, data: Vec<f64>) -> Array2<f64> {
        let w = data.len() / b.max(1);
        Array2::from_shape_vec((b, w), data).expect("activation buffer has batch × width elements")
    }

    /// Full pass. Train mode normalizes with batch statistics and folds them
    /// into the running estimates; eval mode uses the running estimates.
    pub fn forward(&mut self, batch: ArrayView2<f64>, mode: Mode) -> Result<(Array2<f64>, ForwardCache)> {
        let run = self.run(batch, mode, 0..self.layers.len(), true)?;
        if mode == Mode::Train {
            for (i, s) in &run.bn_stats {
                if let Layer::BatchNorm(bn) = &mut self.layers[*i] {
                    bn.update_running(s);
                }
            }
        }
        let b = batch.nrows();
        let cache = ForwardCache {
            version: self.version,
            batch: b,
            acts: run.acts,
            caches: run.caches,
        };
        Ok((self.to_matrix(b, run.output), cache))
    }

    pub fn backward(&self, cache: &ForwardCache, output_gradient: ArrayView2<f64>) -> Result<Gradients> {
        if cache.version != self.version || cache.acts.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        let b = cache.batch;
        let out_w = self.arch.input_len;
        if output_gradient.dim() != (b, out_w) {
            return Err(Error::shape(
                format!("{b}×{out_w} gradient"),
                format!("{:?}", output_gradient.dim()),
            ));
        }
        let mut g: Vec<f64> = output_gradient.iter().copied().collect();
        let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let (dx, dp) = self.layers[i].backward(&cache.acts[i], &cache.caches[i], &g, b);
            per_layer[i] = dp;
            g = dx;
        }
        Ok(Gradients {
            blocks: per_layer.into_iter().flatten().collect(),
        })
    }

    /// Eval-mode forward pass.
    pub fn reconstruct(&self, spectra: ArrayView2<f64>) -> Result<Array2<f64>> {
        let run = self.run(spectra, Mode::Eval, 0..self.layers.len(), false)?;
        Ok(self.to_matrix(spectra.nrows(), run.output))
    }

    /// Eval-mode codes, `rows × latent_dim`.
    pub fn encode(&self, spectra: ArrayView2<f64>) -> Result<Array2<f64>> {
        let run = self.run(spectra, Mode::Eval, 0..self.latent_layer + 1, false)?;
        Ok(self.to_matrix(spectra.nrows(), run.output))
    }

    pub fn decode(&self, codes: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.latent_layer + 1 == self.layers.len() {
            return Ok(codes.to_owned());
        }
        let run = self.run(codes, Mode::Eval, self.latent_layer + 1..self.layers.len(), false)?;
        Ok(self.to_matrix(codes.nrows(), run.output))
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            format_version: NETWORK_FORMAT_VERSION,
            arch: self.arch.clone(),
            latent_layer: self.latent_layer,
            param_count: self.param_count(),
            layers: self.layers.clone(),
        }
    }

    pub fn from_file(f: NetworkFile) -> Result<Self> {
        if f.format_version != NETWORK_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported network format version {}",
                f.format_version
            )));
        }
        let net = Network::from_layers(f.arch, f.layers, f.latent_layer)?;
        if net.param_count() != f.param_count {
            return Err(Error::shape(format!("{} parameters", f.param_count), net.param_count()));
        }
        Ok(net)
    }
}

#[derive(Default)]
struct Run {
    output: Vec<f64>,
    acts: Vec<Vec<f64>>,
    caches: Vec<layers::LayerCache>,
    bn_stats: Vec<(usize, layers::BnBatchStats)>,
}

/// On-disk form (`network.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub format_version: u32,
    pub arch: NetworkArch,
    pub latent_layer: usize,
    pub param_count: usize,
    pub layers: Vec<Layer>,
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Network::from_file(NetworkFile::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl Reconstructor for Network {
    fn input_len(&self) -> usize {
        self.arch.input_len
    }

    fn reconstruct_rows(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.reconstruct(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Network {
        let arch = NetworkArch::new(ArchKind::Fcnn1, 4, 2);
        let layers = vec![
            Layer::Dense(Dense::new(4, 3)),
            Layer::Relu(Relu { width: 3 }),
            Layer::Dense(Dense::new(3, 2)),
            Layer::Dense(Dense::new(2, 4)),
        ];
        Network::from_layers(arch, layers, 2).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = tiny();
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f64);
        assert!(net.reconstruct(x.view()).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn chain_is_validated() {
        let arch = NetworkArch::new(ArchKind::Fcnn1, 4, 2);
        let layers = vec![Layer::Dense(Dense::new(4, 3)), Layer::Dense(Dense::new(2, 4))];
        assert!(Network::from_layers(arch, layers, 0).is_err());
    }

    #[test]
    fn stale_cache_detected() {
        let mut net = tiny();
        let x = Array2::ones((2, 4));
        let (_, cache) = net.forward(x.view(), Mode::Train).unwrap();
        net.params_mut()[0][0] = 0.5;
        assert!(matches!(
            net.backward(&cache, Array2::ones((2, 4)).view()),
            Err(Error::StaleCache)
        ));
    }

    #[test]
    fn non_finite_activation_reports_layer() {
        let mut net = tiny();
        net.params_mut()[0][0] = 1e308;
        let x = Array2::from_elem((1, 4), 1e308);
        match net.reconstruct(x.view()) {
            Err(Error::NonFiniteActivation { layer }) => assert_eq!(layer, 0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
