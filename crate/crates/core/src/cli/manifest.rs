use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    pub crate_version: String,
    /// SHA-256 of the running executable.
    pub code_hash: Option<String>,
    pub config: serde_json::Value,
    pub datasets: Vec<DatasetHash>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        let code_hash = std::env::current_exe()
            .ok()
            .and_then(|p| sha256_file(&p).ok());
        RunManifest {
            manifest_version: MANIFEST_VERSION,
            command: command.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            code_hash,
            config,
            datasets: Vec::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn dataset(&mut self, path: &Path) -> Result<()> {
        self.datasets.push(DatasetHash {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
