//! Run registry: one directory per config hash under `<out>/runs/`.
//!
//! A run directory holds `run.json` (the [`RunRecord`]), `config.json`,
//! `config.toml`, `metrics.csv`, `summary.json`, `checkpoint.chpt` and,
//! for runs with an observation pattern, `pattern.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chanex_core::tasks::{ExperimentConfig, Task, Variant};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};
use crate::fsutil;
use crate::metrics_io::{self, Summary};

pub const RUN_FILE: &str = "run.json";
pub const CONFIG_JSON: &str = "config.json";
pub const CONFIG_TOML: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.chpt";
pub const PATTERN_FILE: &str = "pattern.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub dataset_hash: String,
    /// Whether the dataset came from the cache.
    pub dataset_reused: bool,
    pub task: Task,
    pub variant: Variant,
    /// The init seed.
    pub seed: u64,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
    pub metrics_path: PathBuf,
    pub summary_path: PathBuf,
    pub status: RunStatus,
    /// Cause of a failed run.
    pub error: Option<String>,
}

/// A run with the files needed to compare it against others.
#[derive(Clone, Debug)]
pub struct StoredRun {
    pub record: RunRecord,
    pub config: ExperimentConfig,
    /// Absent for failed runs.
    pub summary: Option<Summary>,
}

#[derive(Debug)]
pub struct Registry {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl Registry {
    /// Registry of the runs written under `out_dir`.
    pub fn open(out_dir: &Path) -> Self {
        Self { root: out_dir.join("runs"), write_lock: Mutex::new(()) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, config_hash: &str) -> PathBuf {
        self.root.join(config_hash)
    }

    pub fn save(&self, record: &RunRecord) -> Result<()> {
        let json = serde_json::to_vec_pretty(record).map_err(|e| Error::format("run record", e.to_string()))?;
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        fsutil::write_atomic(&self.run_dir(&record.config_hash).join(RUN_FILE), &json)
    }

    /// Every recorded run, ordered by config hash.
    pub fn list(&self) -> Result<Vec<RunRecord>> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_at(&self.root)(e)),
        };
        let mut out = Vec::new();
        for entry in entries {
            let path = entry.map_err(io_at(&self.root))?.path().join(RUN_FILE);
            if path.is_file() {
                out.push(read_record(&path)?);
            }
        }
        out.sort_by(|a, b| a.config_hash.cmp(&b.config_hash));
        Ok(out)
    }

    /// Full hash of the single run whose hash starts with `prefix`.
    pub fn resolve(&self, prefix: &str) -> Result<String> {
        if prefix.is_empty() {
            return Err(Error::NotFound("empty run hash".into()));
        }
        let matches: Vec<String> =
            self.list()?.into_iter().map(|r| r.config_hash).filter(|h| h.starts_with(prefix)).collect();
        match matches.as_slice() {
            [one] => Ok(one.clone()),
            [] => Err(Error::NotFound(format!("no run matching `{prefix}` in {}", self.root.display()))),
            _ => Err(Error::NotFound(format!("`{prefix}` matches {} runs", matches.len()))),
        }
    }

    pub fn get(&self, prefix: &str) -> Result<RunRecord> {
        read_record(&self.run_dir(&self.resolve(prefix)?).join(RUN_FILE))
    }

    pub fn load(&self, prefix: &str) -> Result<StoredRun> {
        let record = self.get(prefix)?;
        let dir = self.run_dir(&record.config_hash);
        let config = read_config(&dir.join(CONFIG_JSON))?;
        let summary = match record.status {
            RunStatus::Completed => Some(metrics_io::read_summary(&dir.join(SUMMARY_FILE))?),
            RunStatus::Failed => None,
        };
        Ok(StoredRun { record, config, summary })
    }

    /// [`Registry::load`] for every recorded run.
    pub fn load_all(&self) -> Result<Vec<StoredRun>> {
        self.list()?.iter().map(|r| self.load(&r.config_hash)).collect()
    }
}

fn read_record(path: &Path) -> Result<RunRecord> {
    serde_json::from_str(&fsutil::read_string(path)?).map_err(|e| Error::format("run record", e.to_string()))
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    serde_json::from_str(&fsutil::read_string(path)?).map_err(|e| Error::format("run config", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(hash: &str) -> RunRecord {
        RunRecord {
            config_hash: hash.into(),
            dataset_hash: "d".into(),
            dataset_reused: false,
            task: Task::Antenna,
            variant: Variant::Cnn,
            seed: 1,
            started_at_ms: 0,
            finished_at_ms: 1,
            metrics_path: "m".into(),
            summary_path: "s".into(),
            status: RunStatus::Failed,
            error: Some("boom".into()),
        }
    }

    #[test]
    fn prefixes_resolve_uniquely() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path());
        assert!(reg.list().unwrap().is_empty());
        reg.save(&record("abc1")).unwrap();
        reg.save(&record("abd2")).unwrap();
        assert_eq!(reg.list().unwrap().len(), 2);
        assert_eq!(reg.get("abc").unwrap(), record("abc1"));
        assert!(matches!(reg.resolve("ab"), Err(Error::NotFound(_))));
        assert!(matches!(reg.resolve("zz"), Err(Error::NotFound(_))));
    }
}
