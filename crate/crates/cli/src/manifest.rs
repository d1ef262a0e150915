//! Pipeline run manifest: which stages ran, with what parameters, reading
//! and writing which files, identified by content digest.

use std::path::Path;

use au2vec_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub params: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub duration_secs: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub stages: Vec<StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn digest_of(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

impl PipelineManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }

    /// Recomputes every recorded digest; any file that is missing or whose
    /// content changed since the run is a format error naming the path.
    pub fn verify(&self) -> Result<()> {
        for stage in &self.stages {
            for record in stage.inputs.iter().chain(&stage.outputs) {
                let path = Path::new(&record.path);
                let current = sha256_file(path)?;
                if current != record.sha256 {
                    return Err(Error::format(
                        &record.path,
                        format!("digest mismatch in stage {:?}", stage.stage),
                    ));
                }
            }
        }
        Ok(())
    }
}
