//! Run manifests written next to every output set.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHash {
    /// File name relative to the manifest's directory.
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub master_seed: Option<u64>,
    pub threads: Option<usize>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    /// Effective configuration; feeding it back reproduces the outputs.
    pub config: serde_json::Value,
    pub outputs: Vec<OutputHash>,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<OutputHash> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(OutputHash {
        file: path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, master_seed: Option<u64>, threads: Option<usize>, started: u128) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            threads,
            started_unix_ms: started,
            finished_unix_ms: started,
            config: serde_json::to_value(config)?,
            outputs: Vec::new(),
        })
    }

    /// Hashes `outputs`, stamps the finish time and writes the manifest.
    pub fn finish(mut self, outputs: &[PathBuf], path: &Path) -> Result<PathBuf> {
        self.outputs = outputs.iter().map(|p| hash_file(p)).collect::<Result<_>>()?;
        self.finished_unix_ms = now_ms();
        std::fs::write(path, serde_json::to_string_pretty(&self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path.to_path_buf())
    }
}
