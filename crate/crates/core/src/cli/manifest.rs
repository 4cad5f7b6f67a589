//! Run manifests written beside command outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::write_json;

/// Resolved parameters and input digests of one command run. Two runs with
/// equal manifests (ignoring `timestamp`) produce byte-identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub params: serde_json::Value,
    /// Effective settings after defaults and config files are applied.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub resolved: serde_json::Value,
    /// Input path to lowercase hex SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new<P: Serialize>(command: &str, params: &P, seed: Option<u64>) -> Result<Self> {
        let params = serde_json::to_value(params).map_err(|e| Error::Config(e.to_string()))?;
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(RunManifest {
            command: command.to_string(),
            params,
            resolved: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        })
    }

    pub fn resolve<P: Serialize>(&mut self, value: &P) -> Result<()> {
        self.resolved = serde_json::to_value(value).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// `<file>.manifest.json` beside a single-file output.
pub(crate) fn beside(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}
