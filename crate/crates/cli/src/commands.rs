//! Pipeline stages. Every artifact lives under the config's `out_dir`:
//!
//! ```text
//! elements.json
//! datasets/<name>/{header.json, clean.csv, noisy.csv, mixtures.csv, split.json}
//! models/<name>/{meta.json, <model file>, history.csv | tuning.csv}
//! reports/{report.json, nmse.csv, boxplot.svg, codes/<model>__<dataset>.csv}
//! manifest.json
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kedge_core::attenuation::{ElementLibrary, EnergyGrid};
use kedge_core::eval::{evaluate_model, render_report, EvalReport, Reconstructor, ReportBundle};
use kedge_core::hybrid::{fit_hybrid, HybridModel, HYBRID_LATENT_DIM};
use kedge_core::linear::{fit_svd, SvdModel};
use kedge_core::neural::{init_network, train_denoising, Network, NetworkArch, TrainHistory};
use kedge_core::sparse::{build_basis, log_grid, tune_lambda, SparseBasis, DEFAULT_K_SELECT};
use kedge_core::synth::{
    apply_split, build_dataset, read_dataset, read_json, split_indices, write_dataset, write_json, Dataset,
    DatasetSplit, SplitIndices, StandardizationStats,
};
use kedge_core::Error;
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelEntry, ModelKind, SplitSel};
use crate::error::{CliError, CliResult};
use crate::manifest::write_manifest;

pub const DEFAULT_LATENT_DIM: usize = 5;
pub const DEFAULT_TUNE_ROWS: usize = 500;

pub fn dataset_dir(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.out_dir.join("datasets").join(name)
}

pub fn model_dir(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.out_dir.join("models").join(name)
}

pub fn reports_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("reports")
}

fn require(path: &Path, hint: &'static str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            hint,
        })
    }
}

fn load_library(cfg: &ExperimentConfig) -> CliResult<ElementLibrary> {
    Ok(ElementLibrary::load(&cfg.data_dir)?)
}

#[derive(Debug, Serialize)]
struct ElementSummary {
    z: u8,
    symbol: String,
    density: f64,
    samples: usize,
    edges: Vec<f64>,
}

/// Validates the element tables and writes `elements.json`.
pub fn ingest(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let lib = load_library(cfg)?;
    let summary: Vec<ElementSummary> = lib
        .tables()
        .iter()
        .map(|t| ElementSummary {
            z: t.z,
            symbol: t.symbol.clone(),
            density: t.density,
            samples: t.samples.len(),
            edges: t.edges(),
        })
        .collect();
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let path = cfg.out_dir.join("elements.json");
    write_json(&path, &summary)?;
    log::info!(
        "ingested {} element tables from {}",
        summary.len(),
        cfg.data_dir.display()
    );
    write_manifest(&cfg.out_dir)?;
    Ok(path)
}

/// Generates every configured dataset (or the named subset) with its split.
pub fn synthesize(cfg: &ExperimentConfig, only: &[String]) -> CliResult<Vec<PathBuf>> {
    let lib = load_library(cfg)?;
    let mut stats: HashMap<String, StandardizationStats> = HashMap::new();
    let mut written = Vec::new();
    for entry in cfg.generation_order() {
        if !only.is_empty() && !only.contains(&entry.name) {
            continue;
        }
        let spec = cfg.dataset_spec(entry)?;
        let source = match &entry.stats_from {
            None => None,
            Some(src) => Some(match stats.get(src) {
                Some(s) => s.clone(),
                None => {
                    let dir = dataset_dir(cfg, src);
                    require(&dir.join("header.json"), "synthesize")?;
                    read_dataset(&dir)?.stats
                }
            }),
        };
        let data = build_dataset(&spec, &lib, source.as_ref())?;
        let split = split_indices(data.n_rows(), cfg.split, cfg.split_seed(&entry.name))?;
        let dir = dataset_dir(cfg, &entry.name);
        write_dataset(&data, &dir)?;
        write_json(&dir.join("split.json"), &split)?;
        log::info!(
            "dataset {}: {} rows ({}/{}/{})",
            entry.name,
            data.n_rows(),
            split.train.len(),
            split.val.len(),
            split.test.len()
        );
        stats.insert(entry.name.clone(), data.stats);
        written.push(dir);
    }
    write_manifest(&cfg.out_dir)?;
    Ok(written)
}

pub fn load_split(cfg: &ExperimentConfig, name: &str) -> CliResult<DatasetSplit> {
    let dir = dataset_dir(cfg, name);
    require(&dir.join("header.json"), "synthesize")?;
    require(&dir.join("split.json"), "synthesize")?;
    let data = read_dataset(&dir)?;
    let idx: SplitIndices = read_json(&dir.join("split.json"))?;
    Ok(apply_split(&data, idx))
}

fn cap_rows(d: Dataset, max: Option<usize>) -> Dataset {
    match max {
        Some(m) if m < d.n_rows() => d.subset(&(0..m).collect::<Vec<_>>()),
        _ => d,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub name: String,
    pub kind: ModelKind,
    pub train_dataset: String,
    pub train_rows: usize,
    pub stats: StandardizationStats,
}

/// `sparse_model.json`: the basis is rebuilt from the element tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseModelFile {
    pub format_version: u32,
    pub lambda: f64,
    pub k_select: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub grid: kedge_core::attenuation::GridSpec,
    pub stats_dataset: String,
    pub stats: StandardizationStats,
    pub lambda_grid: Vec<f64>,
    pub tuning_scores: Vec<f64>,
}

pub const SPARSE_MODEL_FORMAT_VERSION: u32 = 1;

fn write_history(path: &Path, h: &TrainHistory) -> CliResult<()> {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for (i, (t, v)) in h.train_loss.iter().zip(&h.val_loss).enumerate() {
        let _ = writeln!(s, "{i},{t:?},{v:?}");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e).into())
}

fn model_file(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Svd => "svd_model.json",
        ModelKind::Fista => "sparse_model.json",
        ModelKind::Autoencoder => "network.json",
        ModelKind::Hybrid => "hybrid_model.json",
    }
}

fn train_one(cfg: &ExperimentConfig, m: &ModelEntry, lib: &mut Option<ElementLibrary>) -> CliResult<PathBuf> {
    let split = load_split(cfg, &m.train_dataset)?;
    let train = cap_rows(split.train, cfg.max_train_rows(m));
    let stats = train.stats.clone();
    let dir = model_dir(cfg, &m.name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let file = dir.join(model_file(m.kind));
    let tc = cfg.train_config(m);
    match m.kind {
        ModelKind::Svd => {
            let rank = m.rank.expect("validated");
            let model = fit_svd(train.clean.view(), rank)?;
            write_json(&file, &model)?;
        }
        ModelKind::Fista => {
            if lib.is_none() {
                *lib = Some(load_library(cfg)?);
            }
            let lib = lib.as_ref().expect("loaded above");
            let k = m.k_select.unwrap_or(DEFAULT_K_SELECT);
            let grid = train.spec.grid.clone();
            let mut basis = build_basis(lib, &grid, &stats, 0.0, k)?;
            let candidates = match (m.lambda, &m.lambda_grid) {
                (Some(l), _) => vec![l],
                (None, Some(g)) => g.clone(),
                (None, None) => log_grid(1e-4, 1.0, 9),
            };
            let rows = m.tune_rows.unwrap_or(DEFAULT_TUNE_ROWS).min(train.n_rows());
            let sub = train.subset(&(0..rows).collect::<Vec<_>>());
            let (lambda, scores) = tune_lambda(&basis, sub.noisy.view(), sub.clean.view(), &candidates)?;
            basis.set_lambda(lambda)?;
            log::info!("model {}: lambda = {lambda:e}", m.name);
            let mut tuning = String::from("lambda,mean_nmse\n");
            for (l, s) in candidates.iter().zip(&scores) {
                let _ = writeln!(tuning, "{l:?},{s:?}");
            }
            let tpath = dir.join("tuning.csv");
            fs::write(&tpath, tuning).map_err(|e| Error::io(&tpath, e))?;
            let f = SparseModelFile {
                format_version: SPARSE_MODEL_FORMAT_VERSION,
                lambda,
                k_select: k,
                max_iters: basis.max_iters,
                tol: basis.tol,
                grid: grid.spec(),
                stats_dataset: m.train_dataset.clone(),
                stats: stats.clone(),
                lambda_grid: candidates,
                tuning_scores: scores,
            };
            write_json(&file, &f)?;
        }
        ModelKind::Autoencoder => {
            let arch = NetworkArch {
                kind: m.arch.expect("validated"),
                input_len: train.n_bins(),
                latent_dim: m.latent_dim.unwrap_or(DEFAULT_LATENT_DIM),
                widths: m.widths.clone(),
            };
            let mut net = init_network(&arch, tc.seed)?;
            let val = &split.val;
            let h = train_denoising(
                &mut net,
                (train.noisy.view(), train.clean.view()),
                (val.noisy.view(), val.clean.view()),
                &tc,
            )?;
            write_json(&file, &net)?;
            write_history(&dir.join("history.csv"), &h)?;
        }
        ModelKind::Hybrid => {
            let base_name = m.base_dataset.as_ref().expect("validated");
            let base = load_split(cfg, base_name)?;
            let arch = NetworkArch {
                kind: m.arch.expect("validated"),
                input_len: train.n_bins(),
                latent_dim: m.latent_dim.unwrap_or(HYBRID_LATENT_DIM),
                widths: m.widths.clone(),
            };
            let (model, h) = fit_hybrid(&base.train, &train, &split.val, &arch, &tc)?;
            write_json(&file, &model)?;
            write_history(&dir.join("history.csv"), &h)?;
        }
    }
    let meta = ModelMeta {
        name: m.name.clone(),
        kind: m.kind,
        train_dataset: m.train_dataset.clone(),
        train_rows: train.n_rows(),
        stats,
    };
    write_json(&dir.join("meta.json"), &meta)?;
    log::info!("model {} written to {}", m.name, file.display());
    Ok(file)
}

/// Fits every configured model (or the named subset).
pub fn train(cfg: &ExperimentConfig, only: &[String]) -> CliResult<Vec<PathBuf>> {
    for name in only {
        if cfg.model(name).is_none() {
            return Err(CliError::Config(format!("unknown model {name}")));
        }
    }
    let mut lib = None;
    let mut out = Vec::new();
    for m in &cfg.models {
        if only.is_empty() || only.contains(&m.name) {
            out.push(train_one(cfg, m, &mut lib)?);
        }
    }
    write_manifest(&cfg.out_dir)?;
    Ok(out)
}

/// A fitted model loaded from disk.
pub enum LoadedModel {
    Svd(SvdModel),
    Sparse(SparseBasis),
    Network(Network),
    Hybrid(HybridModel),
}

impl LoadedModel {
    pub fn as_reconstructor(&self) -> &dyn Reconstructor {
        match self {
            LoadedModel::Svd(m) => m,
            LoadedModel::Sparse(m) => m,
            LoadedModel::Network(m) => m,
            LoadedModel::Hybrid(m) => m,
        }
    }

    /// Per-row code as text: coefficients joined by `;`, or `z:c;...` for
    /// sparse codes.
    pub fn codes(&self, rows: ndarray::ArrayView2<f64>) -> CliResult<Vec<String>> {
        let join = |m: ndarray::Array2<f64>| -> Vec<String> {
            m.axis_iter(Axis(0))
                .map(|r| r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";"))
                .collect()
        };
        Ok(match self {
            LoadedModel::Svd(m) => join(rows.dot(&m.basis)),
            LoadedModel::Network(m) => join(m.encode(rows)?),
            LoadedModel::Hybrid(m) => join(m.encode_rows(rows)?),
            LoadedModel::Sparse(b) => {
                let mut out = Vec::with_capacity(rows.nrows());
                for r in rows.axis_iter(Axis(0)) {
                    let c = b.encode(r)?;
                    let parts: Vec<String> = c
                        .indices
                        .iter()
                        .zip(&c.coefficients)
                        .map(|(z, v)| format!("{z}:{v:?}"))
                        .collect();
                    out.push(parts.join(";"));
                }
                out
            }
        })
    }
}

pub fn load_model(cfg: &ExperimentConfig, name: &str) -> CliResult<(LoadedModel, ModelMeta)> {
    let m = cfg
        .model(name)
        .ok_or_else(|| CliError::Config(format!("unknown model {name}")))?;
    let dir = model_dir(cfg, name);
    let file = dir.join(model_file(m.kind));
    require(&file, "train")?;
    require(&dir.join("meta.json"), "train")?;
    let meta: ModelMeta = read_json(&dir.join("meta.json"))?;
    let model = match m.kind {
        ModelKind::Svd => LoadedModel::Svd(read_json(&file)?),
        ModelKind::Autoencoder => LoadedModel::Network(read_json(&file)?),
        ModelKind::Hybrid => LoadedModel::Hybrid(read_json(&file)?),
        ModelKind::Fista => {
            let f: SparseModelFile = read_json(&file)?;
            if f.format_version != SPARSE_MODEL_FORMAT_VERSION {
                return Err(Error::Validation(format!("unsupported sparse model version {}", f.format_version)).into());
            }
            let grid = EnergyGrid::try_from(f.grid)?;
            let mut basis = build_basis(&load_library(cfg)?, &grid, &f.stats, f.lambda, f.k_select)?;
            basis.max_iters = f.max_iters;
            basis.tol = f.tol;
            LoadedModel::Sparse(basis)
        }
    };
    Ok((model, meta))
}

fn select_rows(split: DatasetSplit, sel: SplitSel, full: impl FnOnce() -> CliResult<Dataset>) -> CliResult<Dataset> {
    Ok(match sel {
        SplitSel::Test => split.test,
        SplitSel::Val => split.val,
        SplitSel::Train => split.train,
        SplitSel::All => full()?,
    })
}

fn evaluation_data(cfg: &ExperimentConfig, dataset: &str, sel: SplitSel) -> CliResult<Dataset> {
    let split = load_split(cfg, dataset)?;
    select_rows(split, sel, || Ok(read_dataset(&dataset_dir(cfg, dataset))?))
}

/// Scores every configured (model, dataset) pair and renders the report.
pub fn evaluate(cfg: &ExperimentConfig) -> CliResult<Vec<EvalReport>> {
    if cfg.evaluations.is_empty() {
        return Err(CliError::NoEvaluations);
    }
    let mut models: HashMap<String, (LoadedModel, ModelMeta)> = HashMap::new();
    let mut reports = Vec::new();
    for e in &cfg.evaluations {
        if !models.contains_key(&e.model) {
            models.insert(e.model.clone(), load_model(cfg, &e.model)?);
        }
        let (model, meta) = &models[&e.model];
        let data = evaluation_data(cfg, &e.dataset, e.split)?;
        if data.stats != meta.stats {
            return Err(Error::Incompatible(format!(
                "model {} was trained with statistics of {}, dataset {} uses different ones",
                e.model, meta.train_dataset, e.dataset
            ))
            .into());
        }
        let r = evaluate_model(model.as_reconstructor(), &e.model, &data, e.input_mode)?;
        log::info!(
            "{} on {}: mean NMSE {:.4e}, median {:.4e} ({} rows)",
            e.model,
            e.dataset,
            r.summary.mean,
            r.summary.median,
            r.nmse.len()
        );
        reports.push(r);
    }
    render_report(&reports, &reports_dir(cfg))?;
    write_manifest(&cfg.out_dir)?;
    Ok(reports)
}

/// Re-renders the saved report and exports per-spectrum codes.
pub fn report(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let dir = reports_dir(cfg);
    let path = dir.join("report.json");
    require(&path, "evaluate")?;
    let bundle: ReportBundle = read_json(&path)?;
    if bundle.reports.is_empty() {
        return Err(CliError::NoEvaluations);
    }
    let mut files = render_report(&bundle.reports, &dir)?;
    let codes_dir = dir.join("codes");
    fs::create_dir_all(&codes_dir).map_err(|e| Error::io(&codes_dir, e))?;
    for e in &cfg.evaluations {
        let (model, _) = load_model(cfg, &e.model)?;
        let data = evaluation_data(cfg, &e.dataset, e.split)?;
        let inputs = match e.input_mode {
            kedge_core::eval::InputMode::Noisy => &data.noisy,
            kedge_core::eval::InputMode::Clean => &data.clean,
        };
        let codes = model.codes(inputs.view())?;
        let mut s = String::from("row,code\n");
        for (i, c) in codes.iter().enumerate() {
            let _ = writeln!(s, "{i},{c}");
        }
        let p = codes_dir.join(format!("{}__{}.csv", e.model, e.dataset));
        fs::write(&p, s).map_err(|err| Error::io(&p, err))?;
        files.push(p);
    }
    write_manifest(&cfg.out_dir)?;
    Ok(files)
}
