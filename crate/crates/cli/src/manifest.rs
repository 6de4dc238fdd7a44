//! Run manifests: every output directory gets exactly one, recording the
//! tool version, the fully resolved configuration, and digests of every
//! input file, so a run can be reproduced byte-for-byte.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub created_unix: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        inputs: &[PathBuf],
    ) -> Result<Self, CliError> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(RunManifest {
            tool: "coremap".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config,
            inputs,
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::internal(format!("manifest serialization: {e}")))?;
        std::fs::write(out_dir.join("manifest.json"), text + "\n")
            .map_err(|e| CliError::validation(format!("cannot write manifest: {e}")))?;
        Ok(())
    }
}
