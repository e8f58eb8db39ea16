//! `manifest.json`: what produced a directory of outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_to_string, write_atomic};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Hash of the resolved configuration, when the command has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    /// Hash of the observed data (responses, log-ratios, positions).
    pub data_hash: String,
    /// Command-specific details.
    #[serde(default)]
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, data_hash: String) -> Self {
        Manifest {
            tool: "cnvassoc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config_hash: None,
            data_hash,
            details: serde_json::Value::Null,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Invalid(format!("manifest: {e}")))?;
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        serde_json::from_str(&read_to_string(&path)?).map_err(|e| Error::Parse {
            path,
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

/// Hash of the data files, in order. Each file is length-prefixed so that
/// moving bytes between files changes the hash.
pub fn hash_files(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = std::fs::read(p).map_err(|e| Error::io(*p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}
