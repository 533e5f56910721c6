//! Run manifests: every command records its resolved settings, seed, and
//! input hashes, enough to reproduce its outputs exactly. No timestamps,
//! so reruns with identical inputs stay byte-identical.

use crate::error::CliError;
use isogloss::stats::fnv64;
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub fnv64: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputRecord>,
    pub settings: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, settings: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            inputs: Vec::new(),
            settings,
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| {
            CliError::data_msg(format!("cannot read input {}: {e}", path.display()))
        })?;
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            fnv64: format!("{:016x}", fnv64(&bytes)),
        });
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_text(&out_dir.join("manifest.json"), &text)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::data_msg(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::data_msg(format!("cannot write {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::data_msg(format!("cannot read {}: {e}", path.display())))
}
