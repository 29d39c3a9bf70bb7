//! JSON experiment configuration.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use kedge_core::attenuation::GridSpec;
use kedge_core::eval::InputMode;
use kedge_core::neural::{ArchKind, TrainConfig};
use kedge_core::synth::{DatasetSpec, KEdgeRule, DEFAULT_NOISE_SIGMA};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.72, 0.20, 0.08);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Element tables; relative paths resolve against the config file.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_split")]
    pub split: (f64, f64, f64),
    /// Caps the training rows of every fitted model unless overridden.
    #[serde(default)]
    pub max_train_rows: Option<usize>,
    #[serde(default)]
    pub training: TrainingOverrides,
    pub datasets: Vec<DatasetEntry>,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub evaluations: Vec<EvaluationEntry>,
}

fn default_split() -> (f64, f64, f64) {
    DEFAULT_SPLIT
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub n_elements: usize,
    pub n_objects: usize,
    pub k_edge_rule: KEdgeRule,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    /// Explicit generation seed; derived from the config seed otherwise.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Dataset whose standardization statistics this one reuses.
    #[serde(default)]
    pub stats_from: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Svd,
    Fista,
    Autoencoder,
    Hybrid,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
}

impl TrainingOverrides {
    fn apply(&self, c: &mut TrainConfig) {
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.beta1 {
            c.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            c.beta2 = v;
        }
        if let Some(v) = self.epsilon {
            c.epsilon = v;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    pub kind: ModelKind,
    pub train_dataset: String,
    /// SVD rank (svd only).
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub arch: Option<ArchKind>,
    #[serde(default)]
    pub latent_dim: Option<usize>,
    #[serde(default)]
    pub widths: Option<Vec<usize>>,
    /// No-K-edge dataset for the hybrid's SVD stage.
    #[serde(default)]
    pub base_dataset: Option<String>,
    /// Candidate sparsity weights (fista).
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    /// Fixed sparsity weight, bypassing tuning (fista).
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Training rows used for λ tuning (fista).
    #[serde(default)]
    pub tune_rows: Option<usize>,
    #[serde(default)]
    pub k_select: Option<usize>,
    #[serde(default)]
    pub max_train_rows: Option<usize>,
    #[serde(default)]
    pub training: TrainingOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitSel {
    #[default]
    Test,
    Val,
    Train,
    All,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationEntry {
    pub model: String,
    pub dataset: String,
    #[serde(default)]
    pub split: SplitSel,
    #[serde(default)]
    pub input_mode: InputMode,
}

/// Seed for a named sub-task: first 8 bytes of SHA-256(seed ‖ label).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

impl ExperimentConfig {
    /// Reads the config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg: ExperimentConfig = kedge_core::synth::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data_dir.is_relative() {
            cfg.data_dir = base.join(&cfg.data_dir);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let err = |m: String| Err(CliError::Config(m));
        let mut names = HashSet::new();
        for d in &self.datasets {
            if !names.insert(d.name.as_str()) {
                return err(format!("duplicate dataset name {}", d.name));
            }
            if d.name.is_empty() || d.name.contains(['/', '\\']) {
                return err(format!("invalid dataset name {:?}", d.name));
            }
        }
        for d in &self.datasets {
            if let Some(src) = &d.stats_from {
                let Some(s) = self.dataset(src) else {
                    return err(format!("{}: stats_from refers to unknown dataset {src}", d.name));
                };
                if s.stats_from.is_some() {
                    return err(format!(
                        "{}: stats_from must name a dataset with its own statistics",
                        d.name
                    ));
                }
                if s.grid.or(self.grid) != d.grid.or(self.grid) {
                    return err(format!("{}: grid differs from stats source {src}", d.name));
                }
            }
        }
        let mut models = HashSet::new();
        for m in &self.models {
            if !models.insert(m.name.as_str()) {
                return err(format!("duplicate model name {}", m.name));
            }
            if m.name.is_empty() || m.name.contains(['/', '\\']) {
                return err(format!("invalid model name {:?}", m.name));
            }
            if self.dataset(&m.train_dataset).is_none() {
                return err(format!("model {}: unknown train_dataset {}", m.name, m.train_dataset));
            }
            match m.kind {
                ModelKind::Svd if m.rank.is_none() => return err(format!("model {}: svd needs rank", m.name)),
                ModelKind::Autoencoder | ModelKind::Hybrid if m.arch.is_none() => {
                    return err(format!("model {}: needs arch", m.name))
                }
                ModelKind::Hybrid => match &m.base_dataset {
                    Some(b) if self.dataset(b).is_some() => {}
                    _ => return err(format!("model {}: hybrid needs a known base_dataset", m.name)),
                },
                _ => {}
            }
        }
        for e in &self.evaluations {
            if self.model(&e.model).is_none() {
                return err(format!("evaluation refers to unknown model {}", e.model));
            }
            if self.dataset(&e.dataset).is_none() {
                return err(format!("evaluation refers to unknown dataset {}", e.dataset));
            }
        }
        Ok(())
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetEntry> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn model(&self, name: &str) -> Option<&ModelEntry> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn dataset_spec(&self, d: &DatasetEntry) -> CliResult<DatasetSpec> {
        let grid = match d.grid.or(self.grid) {
            Some(g) => g.try_into()?,
            None => Default::default(),
        };
        Ok(DatasetSpec {
            name: d.name.clone(),
            n_elements: d.n_elements,
            n_objects: d.n_objects,
            k_edge_rule: d.k_edge_rule,
            grid,
            noise_sigma: d.noise_sigma.unwrap_or(DEFAULT_NOISE_SIGMA),
            seed: d
                .seed
                .unwrap_or_else(|| derive_seed(self.seed, &format!("dataset:{}", d.name))),
        })
    }

    pub fn split_seed(&self, dataset: &str) -> u64 {
        derive_seed(self.seed, &format!("split:{dataset}"))
    }

    pub fn train_config(&self, m: &ModelEntry) -> TrainConfig {
        let mut c = TrainConfig {
            seed: derive_seed(self.seed, &format!("model:{}", m.name)),
            ..TrainConfig::default()
        };
        self.training.apply(&mut c);
        m.training.apply(&mut c);
        c
    }

    pub fn max_train_rows(&self, m: &ModelEntry) -> Option<usize> {
        m.max_train_rows.or(self.max_train_rows)
    }

    /// Datasets in generation order: statistics sources first.
    pub fn generation_order(&self) -> Vec<&DatasetEntry> {
        let (mut own, derived): (Vec<_>, Vec<_>) = self.datasets.iter().partition(|d| d.stats_from.is_none());
        own.extend(derived);
        own
    }
}
