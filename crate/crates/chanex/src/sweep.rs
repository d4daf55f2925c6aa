//! Sweeps: many configs run on a worker pool.

use chanex_core::tasks::ExperimentConfig;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::{run_in, RunOptions};
use crate::registry::{Registry, RunRecord};

/// Runs every config with `jobs` concurrent workers. Records come back in
/// the order of `configs`; each run's results do not depend on `jobs`.
pub fn run_sweep(configs: &[ExperimentConfig], opts: &RunOptions, jobs: usize) -> Result<Vec<RunRecord>> {
    let registry = Registry::open(&opts.out_dir);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::format("worker pool", e.to_string()))?;
    pool.install(|| configs.par_iter().map(|c| run_in(&registry, c, opts)).collect())
}
