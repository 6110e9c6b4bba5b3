use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cli::config::RunConfig;
use crate::error::{Error, Result};
use crate::training::EpochSummary;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILED_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub labels: usize,
    pub rollouts: usize,
    pub interventions: usize,
    pub collisions: usize,
    pub beta: Option<f64>,
}

impl From<&EpochSummary> for EpochRecord {
    fn from(s: &EpochSummary) -> Self {
        Self {
            epoch: s.epoch,
            labels: s.labels,
            rollouts: s.rollouts,
            interventions: s.interventions,
            collisions: s.collisions,
            beta: s.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timestamps {
    pub started_unix: f64,
    pub finished_unix: f64,
}

/// Everything needed to rerun a command, plus hashes of what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: RunConfig,
    pub seeds: BTreeMap<&'static str, u64>,
    pub inputs: BTreeMap<String, String>,
    /// File name to `sha256:<hex>`.
    pub artifacts: BTreeMap<String, String>,
    pub epochs: Vec<EpochRecord>,
    pub beta_trace: Vec<f64>,
    pub tau: Option<f64>,
    /// File name to a description of its record layout.
    pub record_schemas: BTreeMap<String, String>,
    pub timestamps: Timestamps,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("sha256:{}", hex::encode(Sha256::digest(&bytes))))
}

/// Output directory of one command run. Artifacts are hashed as written.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    pub fn create(path: PathBuf, command: &str, argv: Vec<String>, config: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        let marker = path.join(FAILED_MARKER);
        if marker.exists() {
            std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        }
        let seeds = BTreeMap::from([
            ("seed", config.seed),
            ("eval_seed", config.eval_seed),
            ("permitted_seed", config.permitted_seed),
            ("sweep_seed", config.sweep_seed),
        ]);
        let now = unix_now();
        Ok(Self {
            path,
            manifest: RunManifest {
                command: command.to_string(),
                argv,
                config: config.clone(),
                seeds,
                inputs: BTreeMap::new(),
                artifacts: BTreeMap::new(),
                epochs: Vec::new(),
                beta_trace: Vec::new(),
                tau: None,
                record_schemas: BTreeMap::new(),
                timestamps: Timestamps {
                    started_unix: now,
                    finished_unix: now,
                },
            },
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn record(&mut self, name: &str) -> Result<()> {
        let hash = sha256_file(&self.file(name))?;
        self.manifest.artifacts.insert(name.to_string(), hash);
        Ok(())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.file(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.record(name)
    }

    /// One JSON object per line.
    pub fn write_records<T: Serialize>(&mut self, name: &str, schema: &str, records: &[T]) -> Result<()> {
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).map_err(|e| Error::invalid(e.to_string()))?);
            text.push('\n');
        }
        self.manifest.record_schemas.insert(name.to_string(), schema.to_string());
        self.write_bytes(name, text.as_bytes())
    }

    pub fn input(&mut self, label: &str, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.manifest.inputs.insert(format!("{label}:{}", path.display()), hash);
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.timestamps.finished_unix = unix_now();
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::invalid(e.to_string()))?;
        let path = self.file(MANIFEST_FILE);
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(self.path)
    }

    /// Leaves partial artifacts in place and drops a marker naming the error.
    pub fn fail(mut self, err: &Error) {
        self.manifest.timestamps.finished_unix = unix_now();
        let _ = std::fs::write(self.file(FAILED_MARKER), format!("{err}\n"));
        if let Ok(text) = serde_json::to_string_pretty(&self.manifest) {
            let _ = std::fs::write(self.file(MANIFEST_FILE), text + "\n");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_track_written_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path().join("r"), "eval", vec![], &RunConfig::default()).unwrap();
        run.write_bytes("a.txt", b"abc").unwrap();
        assert_eq!(
            run.manifest.artifacts["a.txt"],
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let out = run.finish().unwrap();
        let text = std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap();
        assert!(text.contains("\"command\": \"eval\""));
        assert!(!out.join(FAILED_MARKER).exists());
    }

    #[test]
    fn failure_leaves_marker() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path().join("r"), "eval", vec![], &RunConfig::default()).unwrap();
        run.fail(&Error::invalid("boom"));
        let marker = std::fs::read_to_string(dir.path().join("r").join(FAILED_MARKER)).unwrap();
        assert!(marker.contains("boom"));
    }
}
