//! The run manifest: which config produced the run, hashes of its inputs,
//! and the artifacts each stage wrote. Stages consult it to skip work whose
//! inputs are unchanged and to fail fast on missing upstream artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash over everything the stage consumed (config slice + input files +
    /// upstream stage hashes); a match means rerunning would be a no-op.
    pub input_hash: String,
    /// Artifact files the stage wrote, relative to the run directory.
    pub artifacts: Vec<String>,
    /// Seconds since the Unix epoch at completion.
    pub completed_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub created_at: u64,
    /// Input dataset files by path, with their content hashes.
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    /// Loads the manifest of `out_dir`, or starts a fresh one. An existing
    /// manifest with a different config hash is a config error: a run
    /// directory belongs to exactly one config.
    pub fn load_or_new(out_dir: &Path, config_hash: &str) -> Result<Self, PipelineError> {
        let path = out_dir.join(MANIFEST_FILE);
        if path.exists() {
            let raw = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
            let manifest: RunManifest =
                serde_json::from_str(&raw).map_err(|e| PipelineError::io(&path, e))?;
            if manifest.config_hash != config_hash {
                return Err(PipelineError::Config(format!(
                    "run directory {} was created with a different config (hash {} != {})",
                    out_dir.display(),
                    manifest.config_hash,
                    config_hash
                )));
            }
            return Ok(manifest);
        }
        Ok(Self {
            config_hash: config_hash.to_string(),
            created_at: now(),
            inputs: BTreeMap::new(),
            stages: BTreeMap::new(),
        })
    }

    pub fn save(&self, out_dir: &Path) -> Result<(), PipelineError> {
        let path = out_dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| PipelineError::io(&path, e))
    }

    /// True when `stage` already ran with these exact inputs and all its
    /// artifacts are still on disk.
    pub fn stage_is_current(&self, out_dir: &Path, stage: &str, input_hash: &str) -> bool {
        self.stages.get(stage).is_some_and(|record| {
            record.input_hash == input_hash
                && record.artifacts.iter().all(|a| out_dir.join(a).exists())
        })
    }

    pub fn record_stage(&mut self, stage: &str, input_hash: &str, artifacts: &[&str]) {
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                input_hash: input_hash.to_string(),
                artifacts: artifacts.iter().map(|a| a.to_string()).collect(),
                completed_at: now(),
            },
        );
    }

    /// The input hash of a completed upstream stage, or a missing-artifact
    /// error naming it.
    pub fn require_stage(&self, out_dir: &Path, stage: &str) -> Result<&StageRecord, PipelineError> {
        let record = self.stages.get(stage).ok_or_else(|| PipelineError::MissingArtifact {
            stage: stage.to_string(),
            path: out_dir.join(MANIFEST_FILE).display().to_string(),
        })?;
        for artifact in &record.artifacts {
            let path = out_dir.join(artifact);
            if !path.exists() {
                return Err(PipelineError::MissingArtifact {
                    stage: stage.to_string(),
                    path: path.display().to_string(),
                });
            }
        }
        Ok(record)
    }

    pub fn artifact_path(&self, out_dir: &Path, stage: &str, name: &str) -> Result<PathBuf, PipelineError> {
        let record = self.require_stage(out_dir, stage)?;
        record
            .artifacts
            .iter()
            .find(|a| *a == name)
            .map(|a| out_dir.join(a))
            .ok_or_else(|| PipelineError::MissingArtifact {
                stage: stage.to_string(),
                path: out_dir.join(name).display().to_string(),
            })
    }
}

pub fn sha256_str(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    format!("{:x}", hasher.finalize())
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Hash of several components, order-sensitive.
pub fn combine_hashes(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
    }
    format!("{:x}", hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::load_or_new(dir.path(), "abc").unwrap();
        m.inputs.insert("train.jsonl".into(), "hash1".into());
        m.record_stage("prepare", "h1", &["vocab.json"]);
        m.save(dir.path()).unwrap();
        let loaded = RunManifest::load_or_new(dir.path(), "abc").unwrap();
        assert_eq!(loaded, m);
    }

    #[test]
    fn different_config_hash_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        RunManifest::load_or_new(dir.path(), "abc").unwrap().save(dir.path()).unwrap();
        assert!(matches!(
            RunManifest::load_or_new(dir.path(), "other"),
            Err(PipelineError::Config(_))
        ));
    }

    #[test]
    fn stage_currency_requires_hash_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::load_or_new(dir.path(), "abc").unwrap();
        m.record_stage("prepare", "h1", &["vocab.json"]);
        // Artifact missing on disk -> not current.
        assert!(!m.stage_is_current(dir.path(), "prepare", "h1"));
        std::fs::write(dir.path().join("vocab.json"), "{}").unwrap();
        assert!(m.stage_is_current(dir.path(), "prepare", "h1"));
        assert!(!m.stage_is_current(dir.path(), "prepare", "h2"));
    }

    #[test]
    fn missing_stage_names_itself() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest::load_or_new(dir.path(), "abc").unwrap();
        match m.require_stage(dir.path(), "bucket") {
            Err(PipelineError::MissingArtifact { stage, .. }) => assert_eq!(stage, "bucket"),
            other => panic!("unexpected: {other:?}"),
        }
    }
}
