use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use kedge_core::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub formats: BTreeMap<String, u32>,
    /// Relative path (with `/` separators) to lowercase hex SHA-256.
    pub files: BTreeMap<String, String>,
}

fn collect(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> CliResult<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<Result<_, _>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("walk stays under root");
            if rel == Path::new(MANIFEST_NAME) {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            out.insert(key, hex::encode(Sha256::digest(&bytes)));
        }
    }
    Ok(())
}

/// Hashes everything under `out_dir` into `manifest.json`.
pub fn write_manifest(out_dir: &Path) -> CliResult<Manifest> {
    let mut files = BTreeMap::new();
    if out_dir.exists() {
        collect(out_dir, out_dir, &mut files)?;
    } else {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    let formats = BTreeMap::from([
        ("dataset".to_string(), kedge_core::synth::DATASET_FORMAT_VERSION),
        ("svd_model".to_string(), kedge_core::linear::SVD_MODEL_FORMAT_VERSION),
        ("sparse_model".to_string(), crate::commands::SPARSE_MODEL_FORMAT_VERSION),
        ("network".to_string(), kedge_core::neural::NETWORK_FORMAT_VERSION),
        ("hybrid_model".to_string(), kedge_core::hybrid::HYBRID_FORMAT_VERSION),
    ]);
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        formats,
        files,
    };
    kedge_core::synth::write_json(&out_dir.join(MANIFEST_NAME), &m)?;
    Ok(m)
}
