//! Run manifests: enough to reproduce a run bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliResult;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputHash {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: Value,
    pub outputs: Vec<OutputHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Canonical JSON of the config (sorted keys, no execution-only fields).
pub fn canonical_config(cfg: &RunConfig) -> CliResult<Value> {
    // serde_json maps are key-ordered.
    Ok(serde_json::to_value(cfg)?)
}

pub fn config_hash(cfg: &RunConfig) -> CliResult<String> {
    Ok(sha256_hex(&serde_json::to_vec(&canonical_config(cfg)?)?))
}

impl Manifest {
    pub fn new(cfg: &RunConfig, out_dir: &Path, files: &[&str]) -> CliResult<Self> {
        let outputs = files
            .iter()
            .map(|f| Ok(OutputHash { file: f.to_string(), sha256: sha256_hex(&std::fs::read(out_dir.join(f))?) }))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(Manifest {
            manifest_version: MANIFEST_VERSION,
            tool: "urnwalk".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            experiment: cfg.experiment.name().into(),
            seed: cfg.seed,
            config_hash: config_hash(cfg)?,
            config: canonical_config(cfg)?,
            outputs,
        })
    }

    pub fn write(&self, out_dir: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(out_dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}
