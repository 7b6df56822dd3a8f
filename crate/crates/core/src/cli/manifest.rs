use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::toy::ToyConfig;
use crate::data::write_atomic;
use crate::error::{DhmmError, Result};
use crate::learning::TrainConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Contents of a `--config` file. Both sections are optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub toy: ToyConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DhmmError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DhmmError::parse(path.display().to_string(), e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    /// Command line after the program name.
    pub args: Vec<String>,
    /// Effective configuration after flags were applied.
    pub config: RunConfig,
    pub seed: u64,
    /// Digest of the primary dataset (input file or generated corpus).
    pub dataset_digest: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub threads: usize,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DhmmError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DhmmError::parse(path.display().to_string(), e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| DhmmError::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn config_sections_are_optional() {
        let c: RunConfig = serde_json::from_str("{\"train\": {\"alpha\": 2.5}}").unwrap();
        assert_eq!(c.train.alpha, 2.5);
        assert_eq!(c.toy, ToyConfig::default());
        assert!(serde_json::from_str::<RunConfig>("{\"trian\": {}}").is_err());
    }
}
