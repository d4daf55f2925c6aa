//! One experiment run: dataset from the cache, training, and the files of
//! the run directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use chanex_core::selection::SelectionPattern;
use chanex_core::tasks::{self, ExperimentConfig};

use crate::config::{canonical_json, config_hash, dataset_hash, to_toml};
use crate::error::{Error, Result};
use crate::metrics_io::{self, Summary};
use crate::registry::{self, Registry, RunRecord, RunStatus};
use crate::{cache, checkpoint, fsutil};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Dataset cache; see [`cache::default_root`] when unset.
    pub cache_dir: Option<PathBuf>,
    /// Print one line per finished run to stderr.
    pub progress: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { out_dir: out_dir.into(), ..Self::default() }
    }

    pub fn cache_root(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| cache::default_root(&self.out_dir))
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Runs `config` and records it in the registry under `opts.out_dir`.
///
/// An invalid config is an error and leaves nothing behind. A run that fails afterwards (a dataset
/// the task cannot use, divergence) is recorded and returned with status
/// [`RunStatus::Failed`].
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunRecord> {
    run_in(&Registry::open(&opts.out_dir), config, opts)
}

pub(crate) fn run_in(registry: &Registry, config: &ExperimentConfig, opts: &RunOptions) -> Result<RunRecord> {
    config.validate()?;
    let hash = config_hash(config);
    let dir = registry.run_dir(&hash);
    for stale in [registry::METRICS_FILE, registry::SUMMARY_FILE, registry::CHECKPOINT_FILE, registry::PATTERN_FILE] {
        let _ = fs::remove_file(dir.join(stale));
    }
    let json = serde_json::to_value(config).and_then(|v| serde_json::to_string_pretty(&v)).expect("config serializes");
    fsutil::write_atomic(&dir.join(registry::CONFIG_JSON), json.as_bytes())?;
    fsutil::write_atomic(&dir.join(registry::CONFIG_TOML), to_toml(config)?.as_bytes())?;
    debug_assert_eq!(registry::read_config(&dir.join(registry::CONFIG_JSON)).map(|c| canonical_json(&c)).ok(), Some(canonical_json(config)));

    let started_at_ms = now_ms();
    let clock = Instant::now();
    let mut record = RunRecord {
        config_hash: hash.clone(),
        dataset_hash: dataset_hash(config),
        dataset_reused: false,
        task: config.task,
        variant: config.variant,
        seed: config.seeds.init,
        started_at_ms,
        finished_at_ms: started_at_ms,
        metrics_path: dir.join(registry::METRICS_FILE),
        summary_path: dir.join(registry::SUMMARY_FILE),
        status: RunStatus::Completed,
        error: None,
    };
    let outcome = cache::get_or_build(&opts.cache_root(), config).and_then(|(dataset, reused, _)| {
        record.dataset_reused = reused;
        tasks::run(config, &dataset).map_err(Error::from)
    });
    match outcome {
        Ok(out) => {
            let csv = metrics_io::metrics_csv(&out.metrics, config.seeds.init, &hash)?;
            fsutil::write_atomic(&record.metrics_path, &csv)?;
            checkpoint::write(&dir.join(registry::CHECKPOINT_FILE), &out.params)?;
            if let Some(p) = &out.pattern {
                write_pattern(&dir.join(registry::PATTERN_FILE), p)?;
            }
            let summary = Summary {
                config_hash: hash.clone(),
                seed: config.seeds.init,
                wall_clock_s: clock.elapsed().as_secs_f64(),
                pattern: out.pattern,
                values: out.metrics.summary,
            };
            metrics_io::write_summary(&record.summary_path, &summary)?;
        }
        Err(Error::Core(chanex_core::Error::Diverged { epoch, nmse, .. })) => {
            let e = chanex_core::Error::Diverged { config_hash: hash.clone(), epoch, nmse };
            record.status = RunStatus::Failed;
            record.error = Some(e.to_string());
        }
        Err(e @ Error::Core(chanex_core::Error::Config(_))) => {
            // Some settings are only checked against the built scene; those
            // are still a bad request rather than a failed run.
            let _ = fs::remove_dir_all(&dir);
            return Err(e);
        }
        Err(Error::Core(e)) => {
            record.status = RunStatus::Failed;
            record.error = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    record.finished_at_ms = now_ms();
    registry.save(&record)?;
    if opts.progress {
        let state = match &record.error {
            None => format!("completed in {:.1}s", clock.elapsed().as_secs_f64()),
            Some(e) => format!("failed: {e}"),
        };
        eprintln!("run {} ({}, {}): {state}", &hash[..12], config.task.name(), config.variant.name());
    }
    Ok(record)
}

fn write_pattern(path: &std::path::Path, p: &SelectionPattern) -> Result<()> {
    let json = serde_json::to_string_pretty(p).map_err(|e| Error::format("pattern", e.to_string()))?;
    fsutil::write_atomic(path, json.as_bytes())
}

/// Observation pattern saved with a run, if any.
pub fn read_pattern(path: &std::path::Path) -> Result<Option<SelectionPattern>> {
    if !path.is_file() {
        return Ok(None);
    }
    serde_json::from_str(&fsutil::read_string(path)?).map(Some).map_err(|e| Error::format("pattern", e.to_string()))
}

/// Re-scores the checkpoint of a completed run on its test split.
pub fn evaluate_run(registry: &Registry, prefix: &str, opts: &RunOptions) -> Result<BTreeMap<String, f64>> {
    let run = registry.load(prefix)?;
    if run.record.status != RunStatus::Completed {
        return Err(Error::NotFound(format!("run {} did not complete", run.record.config_hash)));
    }
    let dir = registry.run_dir(&run.record.config_hash);
    let params = checkpoint::read(&dir.join(registry::CHECKPOINT_FILE))?;
    let pattern = read_pattern(&dir.join(registry::PATTERN_FILE))?;
    let (dataset, _, _) = cache::get_or_build(&opts.cache_root(), &run.config)?;
    Ok(tasks::evaluate(&run.config, &dataset, &params, pattern.as_ref())?)
}
