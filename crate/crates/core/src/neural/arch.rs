//! The autoencoder architectures and their initialization.
//!
//! Widths are configurable; the defaults are:
//!
//! | kind      | encoder                                 | code        |
//! |-----------|-----------------------------------------|-------------|
//! | FCNN1     | n → 16 (ReLU)                           | dense → d   |
//! | FCNN2     | n → ⌈n/2⌉ → 16 → 8 (BN + ReLU each)     | dense → d   |
//! | FCNN3     | n → 16 → 8 (BN + ReLU each)             | dense → d   |
//! | CNN1      | conv s2 ×8, conv s2 ×16 (BN + ReLU)     | dense → d   |
//! | CNN2      | conv ×8 + pool, conv ×16 + pool         | dense → d   |
//! | CNN2_DEEP | as CNN2 with channels 8, 16, 32, 32     | dense → d   |
//!
//! Decoders mirror the encoders and end in a linear layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, Conv1d, ConvTranspose1d, Dense, Layer, MaxPool1d, Relu, Upsample};
use super::Network;
use crate::error::{Error, Result};

const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchKind {
    #[serde(rename = "FCNN1")]
    Fcnn1,
    #[serde(rename = "FCNN2")]
    Fcnn2,
    #[serde(rename = "FCNN3")]
    Fcnn3,
    #[serde(rename = "CNN1")]
    Cnn1,
    #[serde(rename = "CNN2")]
    Cnn2,
    #[serde(rename = "CNN2_DEEP")]
    Cnn2Deep,
}

impl ArchKind {
    pub const ALL: [ArchKind; 6] = [
        ArchKind::Fcnn1,
        ArchKind::Fcnn2,
        ArchKind::Fcnn3,
        ArchKind::Cnn1,
        ArchKind::Cnn2,
        ArchKind::Cnn2Deep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Fcnn1 => "FCNN1",
            ArchKind::Fcnn2 => "FCNN2",
            ArchKind::Fcnn3 => "FCNN3",
            ArchKind::Cnn1 => "CNN1",
            ArchKind::Cnn2 => "CNN2",
            ArchKind::Cnn2Deep => "CNN2_DEEP",
        }
    }

    /// Dense widths for FCNNs, channel counts for CNNs.
    pub fn default_widths(self, input_len: usize) -> Vec<usize> {
        match self {
            ArchKind::Fcnn1 => vec![16],
            ArchKind::Fcnn2 => vec![input_len.div_ceil(2), 16, 8],
            ArchKind::Fcnn3 => vec![16, 8],
            ArchKind::Cnn1 | ArchKind::Cnn2 => vec![8, 16],
            ArchKind::Cnn2Deep => vec![8, 16, 32, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkArch {
    pub kind: ArchKind,
    pub input_len: usize,
    pub latent_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
}

impl NetworkArch {
    pub fn new(kind: ArchKind, input_len: usize, latent_dim: usize) -> Self {
        NetworkArch {
            kind,
            input_len,
            latent_dim,
            widths: None,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        self.widths
            .clone()
            .unwrap_or_else(|| self.kind.default_widths(self.input_len))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.latent_dim == 0 {
            return Err(Error::Validation("input_len and latent_dim must be positive".into()));
        }
        if self.latent_dim >= self.input_len {
            return Err(Error::Validation(format!(
                "latent_dim {} is not a bottleneck for input_len {}",
                self.latent_dim, self.input_len
            )));
        }
        let w = self.widths();
        if w.is_empty() || w.contains(&0) {
            return Err(Error::Validation(format!("invalid widths {w:?}")));
        }
        if self.kind == ArchKind::Fcnn1 && w.len() != 1 {
            return Err(Error::Validation("FCNN1 has exactly one hidden width".into()));
        }
        Ok(())
    }

    /// Layer list and the index of the code layer.
    pub fn build_layers(&self) -> Result<(Vec<Layer>, usize)> {
        self.validate()?;
        let w = self.widths();
        match self.kind {
            ArchKind::Fcnn1 => Ok(fcnn(self.input_len, self.latent_dim, &w, false)),
            ArchKind::Fcnn2 | ArchKind::Fcnn3 => Ok(fcnn(self.input_len, self.latent_dim, &w, true)),
            ArchKind::Cnn1 => cnn_strided(self.input_len, self.latent_dim, &w),
            ArchKind::Cnn2 | ArchKind::Cnn2Deep => cnn_pooled(self.input_len, self.latent_dim, &w),
        }
    }
}

fn block(layers: &mut Vec<Layer>, channels: usize, length: usize, bn: bool) {
    if bn {
        layers.push(Layer::BatchNorm(BatchNorm::new(channels, length)));
    }
    layers.push(Layer::Relu(Relu {
        width: channels * length,
    }));
}

fn fcnn(n: usize, d: usize, widths: &[usize], bn: bool) -> (Vec<Layer>, usize) {
    let mut layers = Vec::new();
    let mut prev = n;
    for &w in widths {
        layers.push(Layer::Dense(Dense::new(prev, w)));
        block(&mut layers, w, 1, bn);
        prev = w;
    }
    layers.push(Layer::Dense(Dense::new(prev, d)));
    let latent = layers.len() - 1;
    prev = d;
    // FCNN1 decodes straight from the code to the output.
    if bn {
        for &w in widths.iter().rev() {
            layers.push(Layer::Dense(Dense::new(prev, w)));
            block(&mut layers, w, 1, true);
            prev = w;
        }
    }
    layers.push(Layer::Dense(Dense::new(prev, n)));
    (layers, latent)
}

fn cnn_strided(n: usize, d: usize, channels: &[usize]) -> Result<(Vec<Layer>, usize)> {
    let mut layers = Vec::new();
    let mut lens = vec![n];
    let mut prev_c = 1;
    for &c in channels {
        let conv = Conv1d::new(prev_c, c, KERNEL, 2, 1, *lens.last().unwrap())?;
        let len = conv.out_len;
        layers.push(Layer::Conv1d(conv));
        block(&mut layers, c, len, true);
        lens.push(len);
        prev_c = c;
    }
    let flat = prev_c * lens.last().unwrap();
    layers.push(Layer::Dense(Dense::new(flat, d)));
    let latent = layers.len() - 1;
    layers.push(Layer::Dense(Dense::new(d, flat)));
    block(&mut layers, prev_c, *lens.last().unwrap(), true);
    for i in (0..channels.len()).rev() {
        let out_c = if i == 0 { 1 } else { channels[i - 1] };
        let convt = ConvTranspose1d::new(channels[i], out_c, KERNEL, 2, 1, lens[i + 1], lens[i])?;
        layers.push(Layer::ConvTranspose1d(convt));
        if i > 0 {
            block(&mut layers, out_c, lens[i], true);
        }
    }
    Ok((layers, latent))
}

fn cnn_pooled(n: usize, d: usize, channels: &[usize]) -> Result<(Vec<Layer>, usize)> {
    let mut layers = Vec::new();
    let mut lens = vec![n];
    let mut prev_c = 1;
    for &c in channels {
        let len = *lens.last().unwrap();
        layers.push(Layer::Conv1d(Conv1d::new(prev_c, c, KERNEL, 1, 1, len)?));
        block(&mut layers, c, len, true);
        let pool = MaxPool1d::new(c, 2, 2, len)?;
        lens.push(pool.out_len);
        layers.push(Layer::MaxPool1d(pool));
        prev_c = c;
    }
    let last_len = *lens.last().unwrap();
    let flat = prev_c * last_len;
    layers.push(Layer::Dense(Dense::new(flat, d)));
    let latent = layers.len() - 1;
    layers.push(Layer::Dense(Dense::new(d, flat)));
    block(&mut layers, prev_c, last_len, true);
    for i in (0..channels.len()).rev() {
        let c = channels[i];
        let out_c = if i == 0 { c } else { channels[i - 1] };
        layers.push(Layer::Upsample(Upsample::new(c, lens[i + 1], lens[i])?));
        layers.push(Layer::Conv1d(Conv1d::new(c, out_c, KERNEL, 1, 1, lens[i])?));
        block(&mut layers, out_c, lens[i], true);
    }
    layers.push(Layer::Conv1d(Conv1d::new(channels[0], 1, KERNEL, 1, 1, n)?));
    Ok((layers, latent))
}

/// Weights uniform in ±√(6 / fan_in), biases zero, batch-norm scale 1 and
/// shift 0.
pub fn init_network(arch: &NetworkArch, seed: u64) -> Result<Network> {
    let (mut layers, latent) = arch.build_layers()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut layers {
        if let Some(fan_in) = layer.fan_in() {
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut params = layer.params_mut();
            for w in params[0].iter_mut() {
                *w = rng.random_range(-bound..bound);
            }
        }
    }
    Network::from_layers(arch.clone(), layers, latent)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_default_archs_build() {
        for kind in ArchKind::ALL {
            let n = if kind == ArchKind::Cnn2Deep { 131 } else { 26 };
            for d in [3, 5] {
                let net = init_network(&NetworkArch::new(kind, n, d), 1).unwrap();
                assert_eq!(net.latent_dim(), d);
            }
        }
    }

    #[test]
    fn fcnn1_has_three_weight_matrices() {
        let net = init_network(&NetworkArch::new(ArchKind::Fcnn1, 26, 5), 0).unwrap();
        let dense: Vec<(usize, usize)> = net
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Dense(d) => Some((d.input, d.output)),
                _ => None,
            })
            .collect();
        assert_eq!(dense, vec![(26, 16), (16, 5), (5, 26)]);
    }

    #[test]
    fn seeds_control_init() {
        let arch = NetworkArch::new(ArchKind::Cnn2, 26, 5);
        let a = init_network(&arch, 7).unwrap();
        let b = init_network(&arch, 7).unwrap();
        let c = init_network(&arch, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_arch() {
        assert!(init_network(&NetworkArch::new(ArchKind::Fcnn3, 26, 0), 0).is_err());
        assert!(init_network(&NetworkArch::new(ArchKind::Cnn2Deep, 4, 3), 0).is_err());
    }
}
