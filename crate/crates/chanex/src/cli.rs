//! The `chanex` command line.
//!
//! Results (paths, hashes, JSON, CSV) go to stdout and progress to stderr.
//! Exit codes: 0 on success, 1 for a bad request (usage, invalid config,
//! unknown run, missing file), 2 when running it failed.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{self, ConfigDocument, Overrides};
use crate::error::{Error, Result};
use crate::experiment::{evaluate_run, run_experiment, RunOptions};
use crate::registry::{Registry, RunStatus};
use crate::{aggregate, cache, metrics_io, scene_io, selftest, sweep};

#[derive(Parser, Debug)]
#[command(name = "chanex", version, about = "Channel extrapolation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the scene of a config and write it as JSON.
    GenScene {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output file.
        #[arg(long)]
        path: PathBuf,
    },
    /// Build (or reuse) the cached dataset of a config.
    GenDataset {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train and evaluate one experiment.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-score a saved run on its test split.
    Eval {
        /// Config hash or a unique prefix of it.
        #[arg(long)]
        run: String,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run every combination of a config's [sweep] table.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Concurrent runs.
        #[arg(long)]
        jobs: Option<usize>,
        /// Print an aggregate over these config fields (comma separated).
        #[arg(long, value_delimiter = ',')]
        group_by: Vec<String>,
    },
    /// Median, min and max of every summary metric over the saved runs.
    Aggregate {
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Config fields to group by (comma separated).
        #[arg(long, value_delimiter = ',')]
        group_by: Vec<String>,
    },
    /// Print a run's per-epoch series as `epoch,metric,value`.
    ExportPlot {
        #[arg(long)]
        run: String,
        #[arg(long, value_enum, default_value_t = PlotFormat::Csv)]
        format: PlotFormat,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run the built-in numerical checks.
    Selftest,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlotFormat {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// TOML config document.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    /// Observation budget.
    #[arg(long)]
    r: Option<usize>,
    /// Observation SNR in dB; `inf` for noiseless.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Sets every seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for runs and the dataset cache.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self, jobs: Option<usize>) -> Result<ConfigDocument> {
        let o = Overrides {
            task: self.task.clone(),
            variant: self.variant.clone(),
            r: self.r,
            snr_db: self.snr_db,
            epochs: self.epochs,
            seed: self.seed,
            out_dir: self.out.clone(),
            jobs,
        };
        match &self.config {
            Some(path) => config::load(path, &o),
            None => config::from_overrides(&o),
        }
    }

    /// A document describing a single experiment.
    fn load_single(&self) -> Result<ConfigDocument> {
        let doc = self.load(None)?;
        if !doc.sweep.is_empty() {
            return Err(Error::Schema(vec!["sweep: this command runs one experiment; use `chanex sweep`".into()]));
        }
        Ok(doc)
    }
}

fn options(doc: &ConfigDocument) -> RunOptions {
    RunOptions { out_dir: doc.run.out_dir.clone(), cache_dir: None, progress: true }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes to JSON")
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io { path: PathBuf::from("<stdout>"), source: e }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::GenScene { config, path } => {
            let doc = config.load_single()?;
            let c = &doc.experiment;
            let scene = chanex_core::scene::generate_scene(c.seeds.scene, &c.scene)?;
            scene_io::write(&path, &scene)?;
            writeln!(out, "{}", path.display()).map_err(io_err)?;
        }
        Command::GenDataset { config } => {
            let doc = config.load_single()?;
            let root = cache::default_root(&doc.run.out_dir);
            let (dataset, reused, hash) = cache::get_or_build(&root, &doc.experiment)?;
            let _ = writeln!(
                err,
                "dataset {} ({} samples, {})",
                &hash[..12],
                dataset.num_samples(),
                if reused { "reused" } else { "built" }
            );
            writeln!(out, "{}", root.join(&hash).display()).map_err(io_err)?;
        }
        Command::Train { config } => {
            let doc = config.load_single()?;
            let record = run_experiment(&doc.experiment, &options(&doc))?;
            writeln!(out, "{}", to_json(&record)).map_err(io_err)?;
            if record.status == RunStatus::Failed {
                return Ok(2);
            }
        }
        Command::Eval { run, out: dir } => {
            let registry = Registry::open(&dir);
            let scores = evaluate_run(&registry, &run, &RunOptions::new(&dir))?;
            writeln!(out, "{}", to_json(&scores)).map_err(io_err)?;
        }
        Command::Sweep { config, jobs, group_by } => {
            let doc = config.load(jobs)?;
            let opts = options(&doc);
            let _ = writeln!(err, "sweep: {} runs on {} workers", doc.runs().len(), doc.run.jobs);
            let records = sweep::run_sweep(doc.runs(), &opts, doc.run.jobs)?;
            for r in &records {
                let status = match r.status {
                    RunStatus::Completed => "completed",
                    RunStatus::Failed => "failed",
                };
                writeln!(out, "{} {status}", r.config_hash).map_err(io_err)?;
            }
            if !group_by.is_empty() {
                let registry = Registry::open(&opts.out_dir);
                let runs =
                    records.iter().map(|r| registry.load(&r.config_hash)).collect::<Result<Vec<_>>>()?;
                let rows = aggregate::aggregate(&runs, &group_by)?;
                aggregate::write_csv(&mut *out, &group_by, &rows)?;
            }
            if records.iter().any(|r| r.status == RunStatus::Failed) {
                return Ok(2);
            }
        }
        Command::Aggregate { out: dir, group_by } => {
            let runs = Registry::open(&dir).load_all()?;
            let rows = aggregate::aggregate(&runs, &group_by)?;
            aggregate::write_csv(&mut *out, &group_by, &rows)?;
        }
        Command::ExportPlot { run, format, out: dir } => {
            let text = export_plot(&Registry::open(&dir), &run, format)?;
            out.write_all(&text).map_err(io_err)?;
        }
        Command::Selftest => {
            let mut ok = true;
            for c in selftest::run_all()? {
                ok &= c.passed;
                writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)
                    .map_err(io_err)?;
            }
            if !ok {
                return Ok(2);
            }
        }
    }
    Ok(0)
}

fn export_plot(registry: &Registry, run: &str, format: PlotFormat) -> Result<Vec<u8>> {
    let record = registry.get(run)?;
    if record.status != RunStatus::Completed {
        return Err(Error::NotFound(format!("run {} did not complete", record.config_hash)));
    }
    let rows = metrics_io::read_csv(&registry.run_dir(&record.config_hash).join(crate::registry::METRICS_FILE))?;
    match format {
        PlotFormat::Csv => metrics_io::plot_csv(&rows),
        PlotFormat::Json => metrics_io::plot_json(&rows).map(String::into_bytes),
    }
}

/// [`main_with`] on the process arguments and standard streams.
pub fn main() -> i32 {
    // Unlocked handles: sweep workers print progress from other threads.
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    main_with(std::env::args_os(), &mut stdout, &mut stderr)
}

