use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one run, sufficient to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: RunConfig,
    pub inputs: Vec<InputFile>,
    pub seed: u64,
    /// Files written, relative to the run directory.
    pub artifacts: Vec<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: not a run manifest: {e}", path.display())))
    }

    /// Fails when any input no longer matches its recorded hash.
    pub fn verify_inputs(&self) -> Result<()> {
        for i in &self.inputs {
            let h = sha256_file(&i.path)?;
            if h != i.sha256 {
                return Err(Error::data(format!(
                    "{}: contents changed since the run (sha256 {h}, recorded {})",
                    i.path.display(),
                    i.sha256
                )));
            }
        }
        Ok(())
    }
}
