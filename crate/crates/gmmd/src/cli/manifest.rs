//! Run manifests: one JSON document per run directory recording the exact
//! configuration, input hashes, seed, tool version, and produced files, so a
//! finished run can be audited and reproduced.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GmmdError, Result};
use crate::fsio;

/// One input file: its role in the command (`x`, `y`, `config`), the path as
/// given on the command line, and a content hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run: rerunning the recorded command with
/// the recorded config on inputs matching the recorded hashes yields the
/// recorded outputs (bit-exact except wall-clock columns).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// Full configuration snapshot (shape depends on the command).
    pub config: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    /// File names inside the run directory, in creation order.
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    /// Hashes the file and records it as an input with the given role.
    pub fn record_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let sha256 = fsio::sha256_hex(path)?;
        self.inputs.push(InputRecord {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn record_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    /// Path of the recorded input with the given role, if any.
    pub fn input_path(&self, role: &str) -> Option<PathBuf> {
        self.inputs
            .iter()
            .find(|r| r.role == role)
            .map(|r| PathBuf::from(&r.path))
    }

    /// Writes the manifest atomically (call once, at run end).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| {
            GmmdError::InvalidConfig(format!("manifest serialization failed: {e}"))
        })?;
        text.push('\n');
        fsio::write_atomic(path, text.as_bytes())
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = fsio::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| GmmdError::InvalidConfig(format!("{}: {e}", path.display())))
}

// ============================================================================
// Tests
// ============================================================================
