//! Content-addressed dataset cache.
//!
//! `<root>/<dataset_hash>/manifest.json` lists the splits and samples and
//! names one CHGR file per stored grid. A dataset is written into a temp
//! directory and renamed into place, so a cache entry is either complete
//! or absent.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use chanex_core::channel::CMatrix;
use chanex_core::selection::SelectionPattern;
use chanex_core::tasks::{build_dataset, Dataset, ExperimentConfig, Sample, Split, Task};
use serde::{Deserialize, Serialize};

use crate::config::dataset_hash;
use crate::error::{io_at, Error, Result};
use crate::{fsutil, grid};

pub const FORMAT: &str = "chanex-dataset";
pub const VERSION: u32 = 1;
/// Overrides the cache location.
pub const ENV_DIR: &str = "CHANEX_CACHE_DIR";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    dataset_hash: String,
    task: Task,
    pattern: SelectionPattern,
    info: BTreeMap<String, f64>,
    splits: Vec<SplitEntry>,
}

#[derive(Serialize, Deserialize)]
struct SplitEntry {
    name: String,
    samples: Vec<SampleEntry>,
}

#[derive(Serialize, Deserialize)]
struct SampleEntry {
    terminal_id: u32,
    label: Option<u32>,
    observation: String,
    target: String,
    side: Option<String>,
}

/// Cache directory for runs writing under `out_dir`.
pub fn default_root(out_dir: &Path) -> PathBuf {
    match std::env::var_os(ENV_DIR) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => out_dir.join("cache"),
    }
}

/// One lock per dataset hash, so concurrent runs in this process build a
/// shared dataset once.
fn hash_lock(hash: &str) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut locks = LOCKS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    locks.entry(hash.to_string()).or_default().clone()
}

/// The dataset of `config`, read from `root` when present and built and
/// stored otherwise. Returns the dataset, whether it was reused, and its
/// hash.
pub fn get_or_build(root: &Path, config: &ExperimentConfig) -> Result<(Dataset, bool, String)> {
    let hash = dataset_hash(config);
    let lock = hash_lock(&hash);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    let dir = root.join(&hash);
    if dir.join("manifest.json").is_file() {
        return Ok((load(&dir, &hash)?, true, hash));
    }
    let dataset = build_dataset(config)?;
    store(root, &hash, &dataset)?;
    Ok((dataset, false, hash))
}

fn store(root: &Path, hash: &str, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(root).map_err(io_at(root))?;
    let tmp = fsutil::temp_sibling(&root.join(hash));
    let result = write_dir(&tmp, hash, dataset).and_then(|()| {
        match fs::rename(&tmp, root.join(hash)) {
            Ok(()) => Ok(()),
            // Another process stored the same dataset first.
            Err(_) if root.join(hash).join("manifest.json").is_file() => {
                let _ = fs::remove_dir_all(&tmp);
                Ok(())
            }
            Err(e) => Err(io_at(&tmp)(e)),
        }
    });
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result
}

fn write_dir(dir: &Path, hash: &str, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let put = |name: String, m: &CMatrix| -> Result<String> {
        let path = dir.join(&name);
        fs::write(&path, grid::encode(m)).map_err(io_at(&path))?;
        Ok(name)
    };
    let mut splits = Vec::new();
    for split in &dataset.splits {
        let mut samples = Vec::new();
        for (i, s) in split.samples.iter().enumerate() {
            let stem = format!("{}-{i:05}", split.name);
            samples.push(SampleEntry {
                terminal_id: s.terminal_id,
                label: s.label,
                observation: put(format!("{stem}-obs.chgr"), &s.observation)?,
                target: put(format!("{stem}-target.chgr"), &s.target)?,
                side: s.side.as_ref().map(|m| put(format!("{stem}-side.chgr"), m)).transpose()?,
            });
        }
        splits.push(SplitEntry { name: split.name.clone(), samples });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        dataset_hash: hash.into(),
        task: dataset.task,
        pattern: dataset.pattern.clone(),
        info: dataset.info.clone(),
        splits,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::format("dataset manifest", e.to_string()))?;
    let path = dir.join("manifest.json");
    fs::write(&path, json).map_err(io_at(&path))
}

/// Reads the cache entry in `dir`, checking it belongs to `hash`.
pub fn load(dir: &Path, hash: &str) -> Result<Dataset> {
    let text = fsutil::read_string(&dir.join("manifest.json"))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format("dataset manifest", e.to_string()))?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::format("dataset manifest", format!("unsupported {} v{}", m.format, m.version)));
    }
    if m.dataset_hash != hash {
        return Err(Error::format("dataset manifest", format!("hash {} in a directory for {hash}", m.dataset_hash)));
    }
    let get = |name: &str| -> Result<CMatrix> {
        if name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(Error::format("dataset manifest", format!("bad file name {name}")));
        }
        grid::read(&dir.join(name))
    };
    let mut splits = Vec::new();
    for split in m.splits {
        let samples = split
            .samples
            .iter()
            .map(|e| {
                Ok(Sample {
                    terminal_id: e.terminal_id,
                    observation: get(&e.observation)?,
                    target: get(&e.target)?,
                    side: e.side.as_deref().map(get).transpose()?,
                    label: e.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        splits.push(Split { name: split.name, samples });
    }
    Ok(Dataset { task: m.task, pattern: m.pattern, splits, info: m.info })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chanex_core::tasks::Seeds;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::for_task(Task::CrossBand);
        c.scene.num_terminals = 30;
        c.seeds = Seeds::all(3);
        c
    }

    #[test]
    fn stored_dataset_reads_back_identically() {
        let dir = tempfile::tempdir().unwrap();
        let (built, reused, hash) = get_or_build(dir.path(), &tiny()).unwrap();
        assert!(!reused);
        let (read, reused, again) = get_or_build(dir.path(), &tiny()).unwrap();
        assert!(reused);
        assert_eq!(hash, again);
        assert_eq!(read, built);
    }

    #[test]
    fn entry_for_another_hash_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, hash) = get_or_build(dir.path(), &tiny()).unwrap();
        assert!(matches!(load(&dir.path().join(&hash), "0000"), Err(Error::Format { .. })));
    }
}
