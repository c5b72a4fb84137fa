use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Stage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Record of one command's outputs. Paths are relative to `outDir`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_hash: Option<String>,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(Stage::Manifest, path, e))?;
    Ok(sha256_bytes(&bytes))
}

impl RunManifest {
    pub fn new(command: &str, out_dir: &Path) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: None,
            corpus_hash: None,
            seeds: Vec::new(),
            out_dir: out_dir.display().to_string(),
            artifacts: Vec::new(),
        }
    }

    /// Hash `out_dir/rel` and list it.
    pub fn add(&mut self, rel: impl Into<PathBuf>) -> Result<(), CliError> {
        let rel = rel.into();
        let sha256 = sha256_file(&Path::new(&self.out_dir).join(&rel))?;
        self.artifacts.push(Artifact {
            path: rel.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn write(&self, name: &str) -> Result<PathBuf, CliError> {
        let path = Path::new(&self.out_dir).join(name);
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        std::fs::write(&path, text).map_err(|e| CliError::io(Stage::Manifest, &path, e))?;
        Ok(path)
    }
}
