//! JSON record of a training run, written before training starts.

use std::fs;
use std::path::{Path, PathBuf};

use kandistill::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
    /// Artifact role to path.
    pub artifacts: Vec<(String, PathBuf)>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            role: role.to_string(),
            path: path.to_path_buf(),
            sha256: file_sha256(path)?,
        });
        Ok(())
    }

    pub fn artifact(&mut self, role: &str, path: &Path) {
        self.artifacts.push((role.to_string(), path.to_path_buf()));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.bin");
        fs::write(&input, b"abc").unwrap();
        let mut m = RunManifest::new("train-teacher", &RunConfig::default());
        m.input("train", &input).unwrap();
        m.artifact("model", &dir.path().join("teacher.kdkd"));
        assert_eq!(
            m.inputs[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let path = dir.path().join("run.json");
        m.write(&path).unwrap();
        let back: RunManifest = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
