//! Run manifests: enough to replay a command and check its outputs.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command arguments beyond the config (e.g. a report path).
    pub args: Vec<String>,
    pub config_hash: String,
    pub master_seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Output files, relative to the output directory.
    pub artifacts: Vec<String>,
    pub config: RunConfig,
    pub version: String,
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, config: &RunConfig, started_unix: u64, artifacts: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            args,
            config_hash: config.hash(),
            master_seed: config.seed,
            started_unix,
            finished_unix: now_unix(),
            artifacts,
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(
            m.config.hash() == m.config_hash,
            "{}: config does not match its recorded hash",
            path.display()
        );
        Ok(m)
    }
}
