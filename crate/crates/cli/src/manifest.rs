//! Per-stage run manifests: what a stage consumed and produced, with
//! content hashes, so downstream stages can detect stale or edited inputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use hybridclf::util::sha256_hex;

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub version: String,
    pub config_hash: String,
    pub inputs: Vec<ArtifactEntry>,
    pub artifacts: Vec<ArtifactEntry>,
    pub seconds: f64,
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| hybridclf::Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Collects a stage's outputs while it runs.
pub struct StageRecorder {
    root: PathBuf,
    stage: String,
    config_hash: String,
    started: Instant,
    inputs: Vec<ArtifactEntry>,
    artifacts: Vec<ArtifactEntry>,
}

impl StageRecorder {
    pub fn start(root: &Path, stage: &str, config_hash: String) -> Result<Self, CliError> {
        let dir = root.join(stage);
        std::fs::create_dir_all(&dir).map_err(|e| hybridclf::Error::io(&dir, e))?;
        // a stale manifest must not survive a failed rerun
        let old = dir.join(MANIFEST);
        if old.exists() {
            std::fs::remove_file(&old).map_err(|e| hybridclf::Error::io(&old, e))?;
        }
        Ok(StageRecorder {
            root: root.to_path_buf(),
            stage: stage.to_string(),
            config_hash,
            started: Instant::now(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    /// A recorder that only tracks inputs, for commands that write no stage
    /// directory.
    pub fn detached(root: &Path, stage: &str) -> Self {
        StageRecorder {
            root: root.to_path_buf(),
            stage: stage.to_string(),
            config_hash: String::new(),
            started: Instant::now(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn dir(&self) -> PathBuf {
        self.root.join(&self.stage)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir().join(name)
    }

    pub fn consumed(&mut self, entry: &ArtifactEntry) {
        self.inputs.push(entry.clone());
    }

    pub fn produced(&mut self, path: &Path) -> Result<(), CliError> {
        self.artifacts.push(ArtifactEntry {
            path: relative(&self.root, path),
            sha256: hash_file(path)?,
        });
        Ok(())
    }

    pub fn finish(self) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            stage: self.stage.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config_hash,
            inputs: self.inputs,
            artifacts: self.artifacts,
            seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.root.join(&self.stage).join(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| hybridclf::Error::io(&path, e))?;
        Ok(manifest)
    }
}

impl RunManifest {
    /// Load an upstream stage's manifest and check every listed artifact
    /// still has its recorded hash.
    pub fn load_verified(root: &Path, stage: &str) -> Result<Self, CliError> {
        let path = root.join(stage).join(MANIFEST);
        if !path.is_file() {
            return Err(CliError::MissingArtifact {
                stage: stage.to_string(),
                path: path.display().to_string(),
            });
        }
        let text = std::fs::read_to_string(&path).map_err(|e| hybridclf::Error::io(&path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text)?;
        for a in &manifest.artifacts {
            let p = root.join(&a.path);
            if !p.is_file() {
                return Err(CliError::MissingArtifact {
                    stage: stage.to_string(),
                    path: p.display().to_string(),
                });
            }
            let found = hash_file(&p)?;
            if found != a.sha256 {
                return Err(hybridclf::Error::HashMismatch {
                    what: a.path.clone(),
                    expected: a.sha256.clone(),
                    found,
                }
                .into());
            }
        }
        Ok(manifest)
    }

    /// The artifact whose path ends with `name`.
    pub fn artifact(&self, name: &str) -> Result<&ArtifactEntry, CliError> {
        self.artifacts
            .iter()
            .find(|a| a.path == format!("{}/{name}", self.stage))
            .ok_or_else(|| CliError::MissingArtifact {
                stage: self.stage.clone(),
                path: format!("{}/{name}", self.stage),
            })
    }
}
