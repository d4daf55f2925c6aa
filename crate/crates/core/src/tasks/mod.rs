//! The four extrapolation pipelines.
//!
//! Every pipeline is a pure function of an [`ExperimentConfig`]: the scene,
//! dataset, initialisation, shuffling and noise all draw from the explicit
//! seeds it carries. Datasets are built in memory with every value rounded
//! through `f32`, the precision they are stored at, so a dataset reloaded
//! from disk trains identically to a freshly built one.

pub mod antenna;
pub mod crossband;
pub mod frequency;
pub mod terminal;
mod train;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::channel::{ArrayGeometry, CMatrix, OfdmConfig};
use crate::error::{bail, Result};
use crate::geometry::Point3;
use crate::scene::{SceneParams, TerminalCluster};
use crate::selection::SelectionPattern;

pub use crossband::BeamCodebook;
pub use frequency::interpolate_baseline;
pub use terminal::{epochs_to_threshold, group_terminals};
pub use train::FitOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Antenna,
    FrequencyInBand,
    CrossBand,
    Terminal,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Antenna, Task::FrequencyInBand, Task::CrossBand, Task::Terminal];

    pub fn name(self) -> &'static str {
        match self {
            Task::Antenna => "antenna",
            Task::FrequencyInBand => "frequency_in_band",
            Task::CrossBand => "cross_band",
            Task::Terminal => "terminal",
        }
    }

    pub fn from_name(name: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == name)
    }
}

/// Where the observation pattern comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSource {
    Uniform,
    Random,
    Learned,
    /// The indices listed in `pattern_indices`.
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Cnn,
    OdeCnn,
    BaselineDnn,
    FusionNet,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Cnn, Variant::OdeCnn, Variant::BaselineDnn, Variant::FusionNet];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cnn => "cnn",
            Variant::OdeCnn => "ode_cnn",
            Variant::BaselineDnn => "baseline_dnn",
            Variant::FusionNet => "fusion_net",
        }
    }

    pub fn from_name(name: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == name)
    }
}

/// Cyclic-prefix regime of the in-band frequency dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CpMode {
    #[serde(rename = "en_cp")]
    Enough,
    #[serde(rename = "in_cp")]
    Insufficient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub scene: u64,
    pub init: u64,
    pub data: u64,
    pub noise: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { scene: 1, init: 1, data: 1, noise: 1 }
    }
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self { scene: seed, init: seed, data: seed, noise: seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Feature maps per hidden convolution.
    pub channels: usize,
    /// Convolution kernel width along the subcarrier axis.
    pub kernel: usize,
    /// Width of hidden dense layers.
    pub hidden: usize,
    pub ode_steps: usize,
    pub ode_step_size: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { channels: 32, kernel: 3, hidden: 512, ode_steps: 4, ode_step_size: 0.25 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntennaParams {
    /// Downlink minus uplink carrier, Hz.
    pub carrier_offset: f64,
}

impl Default for AntennaParams {
    fn default() -> Self {
        Self { carrier_offset: 120e6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyParams {
    /// Fraction of subcarriers observed.
    pub sample_rate: f64,
    pub cp_mode: CpMode,
    /// CP length of the enough-CP variant, samples.
    pub enough_cp: usize,
    /// CP length of the insufficient-CP variant, samples.
    pub insufficient_cp: usize,
    /// Minimum excess of delay spread over the short CP, taps.
    pub isi_margin: usize,
}

impl Default for FrequencyParams {
    fn default() -> Self {
        Self { sample_rate: 0.25, cp_mode: CpMode::Insufficient, enough_cp: 32, insufficient_cp: 4, isi_margin: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossbandParams {
    pub mmwave_array: ArrayGeometry,
    pub mmwave_ofdm: OfdmConfig,
    #[serde(with = "crate::serde_db")]
    pub pilot_snr_db: f64,
    #[serde(with = "crate::serde_db")]
    pub sub6_snr_db: f64,
}

impl Default for CrossbandParams {
    fn default() -> Self {
        let mmwave_ofdm =
            OfdmConfig { carrier_freq: 28e9, subcarrier_spacing: 120e3, num_subcarriers: 4, cp_length: 1 };
        Self {
            mmwave_array: ArrayGeometry::half_wavelength(4, 8, mmwave_ofdm.carrier_freq)
                .expect("valid default array"),
            mmwave_ofdm,
            pilot_snr_db: 20.0,
            sub6_snr_db: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminalParams {
    /// Single-linkage cutoff, meters.
    pub group_radius: f64,
    /// Index into the scene's terminal clusters.
    pub source_cluster: usize,
    pub target_cluster: usize,
    /// Epochs of source training before transfer.
    pub source_epochs: usize,
}

impl Default for TerminalParams {
    fn default() -> Self {
        Self { group_radius: 0.3, source_cluster: 0, target_cluster: 1, source_epochs: 60 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionParams {
    pub temperature_start: f64,
    pub temperature_end: f64,
    pub logit_learning_rate: f64,
    /// Epochs of joint pattern and network training before the hardened
    /// pattern is retrained from scratch.
    pub search_epochs: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self { temperature_start: 1.0, temperature_end: 0.05, logit_learning_rate: 0.05, search_epochs: 30 }
    }
}

/// Everything that determines one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub scene: SceneParams,
    pub array: ArrayGeometry,
    pub ofdm: OfdmConfig,
    pub pattern: PatternSource,
    /// Selected elements when `pattern` is `fixed`.
    #[serde(default)]
    pub pattern_indices: Vec<usize>,
    pub r: usize,
    pub variant: Variant,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seeds: Seeds,
    #[serde(with = "crate::serde_db")]
    pub snr_db: f64,
    pub model: ModelParams,
    pub antenna: AntennaParams,
    pub frequency: FrequencyParams,
    pub crossband: CrossbandParams,
    pub terminal: TerminalParams,
    pub selection: SelectionParams,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `task`.
    pub fn for_task(task: Task) -> Self {
        let base = Self {
            task,
            scene: SceneParams { num_terminals: 2500, ..SceneParams::default() },
            array: ArrayGeometry::half_wavelength(8, 8, 2.4e9).expect("valid default array"),
            ofdm: OfdmConfig { carrier_freq: 2.4e9, subcarrier_spacing: 312.5e3, num_subcarriers: 64, cp_length: 16 },
            pattern: PatternSource::Uniform,
            pattern_indices: Vec::new(),
            r: 8,
            variant: Variant::Cnn,
            epochs: 150,
            learning_rate: 1e-3,
            batch_size: 16,
            seeds: Seeds::default(),
            snr_db: 30.0,
            model: ModelParams::default(),
            antenna: AntennaParams::default(),
            frequency: FrequencyParams::default(),
            crossband: CrossbandParams::default(),
            terminal: TerminalParams::default(),
            selection: SelectionParams::default(),
        };
        match task {
            Task::Antenna => base,
            Task::FrequencyInBand => Self {
                array: ArrayGeometry::half_wavelength(2, 2, 60e9).expect("valid default array"),
                ofdm: OfdmConfig {
                    carrier_freq: 60e9,
                    subcarrier_spacing: 240e3,
                    num_subcarriers: 256,
                    cp_length: 32,
                },
                model: ModelParams { channels: 16, kernel: 5, ..ModelParams::default() },
                epochs: 40,
                snr_db: f64::INFINITY,
                ..base
            },
            Task::CrossBand => Self {
                array: ArrayGeometry::half_wavelength(2, 2, 3.5e9).expect("valid default array"),
                ofdm: OfdmConfig { carrier_freq: 3.5e9, subcarrier_spacing: 240e3, num_subcarriers: 16, cp_length: 4 },
                variant: Variant::FusionNet,
                epochs: 60,
                model: ModelParams { hidden: 512, ..ModelParams::default() },
                ..base
            },
            Task::Terminal => {
                let mut scene = SceneParams::default();
                let clusters = [(Point3::new(42.0, 42.0, 1.5), 0.5), (Point3::new(43.5, 42.0, 1.5), 0.5), (Point3::new(8.0, 8.0, 1.5), 0.5)];
                scene.terminal_clusters = clusters
                    .iter()
                    .map(|&(center, radius)| TerminalCluster { center, radius, count: 150 })
                    .collect();
                scene.num_terminals = 450;
                Self { scene, epochs: 60, ..base }
            }
        }
    }

    /// Checks the fields every pipeline relies on.
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.array.validate()?;
        self.ofdm.validate()?;
        if self.r == 0 {
            bail!(Config, "r must be at least 1");
        }
        if self.epochs == 0 {
            bail!(Config, "epochs must be at least 1");
        }
        if self.batch_size == 0 {
            bail!(Config, "batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bail!(Config, "learning_rate must be positive and finite");
        }
        if self.snr_db.is_nan() {
            bail!(Config, "snr_db is NaN");
        }
        if self.model.channels == 0 || self.model.hidden == 0 || self.model.kernel % 2 == 0 {
            bail!(Config, "model needs non-zero widths and an odd kernel");
        }
        let allowed: &[Variant] = match self.task {
            Task::Antenna | Task::Terminal => &[Variant::Cnn, Variant::OdeCnn],
            Task::FrequencyInBand => &[Variant::Cnn, Variant::OdeCnn],
            Task::CrossBand => &[Variant::BaselineDnn, Variant::FusionNet],
        };
        if !allowed.contains(&self.variant) {
            bail!(Config, "variant {} is not available for the {} task", self.variant.name(), self.task.name());
        }
        if self.pattern == PatternSource::Fixed {
            if !matches!(self.task, Task::Antenna | Task::Terminal) {
                bail!(Config, "fixed patterns are only available for the antenna and terminal tasks");
            }
            if self.pattern_indices.len() != self.r {
                bail!(Config, "pattern_indices lists {} elements but r = {}", self.pattern_indices.len(), self.r);
            }
        }
        if self.pattern == PatternSource::Learned && self.task != Task::Antenna {
            bail!(Config, "learned patterns are only available for the antenna task");
        }
        if !(self.selection.temperature_start > 0.0 && self.selection.temperature_end > 0.0) {
            bail!(Config, "selection temperatures must be positive");
        }
        Ok(())
    }

    /// Copy with every field that does not affect dataset contents reset,
    /// so that configs differing only in training knobs share a dataset.
    pub fn dataset_key(&self) -> ExperimentConfig {
        let mut key = Self::for_task(self.task);
        key.scene = self.scene.clone();
        key.array = self.array;
        key.ofdm = self.ofdm;
        key.seeds = Seeds { init: 0, ..self.seeds };
        key.snr_db = self.snr_db;
        key.pattern = self.pattern;
        key.pattern_indices = self.pattern_indices.clone();
        key.r = self.r;
        match self.task {
            Task::Antenna | Task::Terminal => {
                key.antenna = self.antenna;
                key.terminal.group_radius = self.terminal.group_radius;
                key.terminal.source_cluster = self.terminal.source_cluster;
                key.terminal.target_cluster = self.terminal.target_cluster;
            }
            Task::FrequencyInBand => key.frequency = self.frequency,
            Task::CrossBand => key.crossband = self.crossband,
        }
        key
    }
}

/// One terminal's worth of data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub terminal_id: u32,
    /// What the model sees (masked, possibly noisy).
    pub observation: CMatrix,
    /// Regression target or, for beam prediction, the mmWave channel the
    /// label was computed from.
    pub target: CMatrix,
    /// Second model input (the sub-6 GHz grid for beam prediction).
    pub side: Option<CMatrix>,
    pub label: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub name: String,
    pub samples: Vec<Sample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: Task,
    /// Observation pattern; all ones when the model chooses its own.
    pub pattern: SelectionPattern,
    pub splits: Vec<Split>,
    /// Scalar facts about how the dataset was built.
    #[serde(default)]
    pub info: BTreeMap<String, f64>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Result<&[Sample]> {
        match self.splits.iter().find(|s| s.name == name) {
            Some(s) => Ok(&s.samples),
            None => bail!(Usage, "dataset has no split named {name}"),
        }
    }

    pub fn train(&self) -> Result<&[Sample]> {
        self.split("train")
    }

    pub fn test(&self) -> Result<&[Sample]> {
        self.split("test")
    }

    pub fn num_samples(&self) -> usize {
        self.splits.iter().map(|s| s.samples.len()).sum()
    }
}

/// Splits ids 80/20 in ascending id order.
pub(crate) fn split_ids(mut ids: Vec<u32>) -> (Vec<u32>, Vec<u32>) {
    ids.sort_unstable();
    let cut = (ids.len() * 4).div_ceil(5);
    let test = ids.split_off(cut);
    (ids, test)
}

/// Per-epoch curves plus scalar summaries of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `(epoch, value)` points per series name.
    pub series: BTreeMap<String, Vec<(usize, f64)>>,
    pub summary: BTreeMap<String, f64>,
}

impl Metrics {
    pub fn push(&mut self, name: &str, epoch: usize, value: f64) {
        self.series.entry(name.to_string()).or_default().push((epoch, value));
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.summary.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.summary.get(name).copied()
    }

    /// Rows `(epoch, metric, value)` ordered by metric name then epoch.
    pub fn rows(&self) -> Vec<(usize, &str, f64)> {
        let mut out = Vec::new();
        for (name, points) in &self.series {
            for &(epoch, value) in points {
                out.push((epoch, name.as_str(), value));
            }
        }
        out
    }
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Result of one pipeline run.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub params: crate::nn::ParamStore,
    pub metrics: Metrics,
    /// Observation pattern the returned model was trained with.
    pub pattern: Option<SelectionPattern>,
}

/// Builds the dataset `config` describes.
pub fn build_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    config.validate()?;
    match config.task {
        Task::Antenna => antenna::build(config),
        Task::FrequencyInBand => frequency::build(config),
        Task::CrossBand => crossband::build(config),
        Task::Terminal => terminal::build(config),
    }
}

/// Trains and evaluates the model `config` describes on `dataset`.
pub fn run(config: &ExperimentConfig, dataset: &Dataset) -> Result<Outcome> {
    config.validate()?;
    if dataset.task != config.task {
        bail!(Usage, "dataset was built for the {} task", dataset.task.name());
    }
    match config.task {
        Task::Antenna => antenna::train(config, dataset),
        Task::FrequencyInBand => frequency::train(config, dataset),
        Task::CrossBand => crossband::train(config, dataset),
        Task::Terminal => terminal::run(config, dataset),
    }
}

/// Test-split scores of `params` on `dataset`: `test_nmse` and
/// `test_nmse_db`, or `test_acc_top1` for the cross-band task. `pattern`
/// overrides the dataset's observation pattern (a learned pattern must be
/// passed here).
pub fn evaluate(
    config: &ExperimentConfig,
    dataset: &Dataset,
    params: &crate::nn::ParamStore,
    pattern: Option<&SelectionPattern>,
) -> Result<BTreeMap<String, f64>> {
    config.validate()?;
    if dataset.task != config.task {
        bail!(Usage, "dataset was built for the {} task", dataset.task.name());
    }
    let pattern = pattern.unwrap_or(&dataset.pattern);
    let test = dataset.test()?;
    if test.is_empty() {
        bail!(Usage, "dataset has an empty test split");
    }
    let mut out = BTreeMap::new();
    let nmse = match config.task {
        Task::Antenna | Task::Terminal => {
            let spec = antenna::network(config);
            train::eval_checked(&spec, params, &antenna::tensors(test, &dataset.pattern, pattern)?)?
        }
        Task::FrequencyInBand => {
            let spec = frequency::network(config);
            out.insert("baseline_nmse".into(), frequency::baseline_nmse(test, pattern)?);
            train::eval_checked(&spec, params, &frequency::tensors(test, pattern)?)?
        }
        Task::CrossBand => {
            let spec = crossband::network(config);
            if !params.matches(&spec) {
                bail!(Usage, "parameters do not match the configured network");
            }
            let acc = train::eval_accuracy(&spec, params, &crossband::labelled(config, test)?)?;
            out.insert("test_acc_top1".into(), acc);
            return Ok(out);
        }
    };
    out.insert("test_nmse".into(), nmse);
    out.insert("test_nmse_db".into(), to_db(nmse));
    Ok(out)
}

pub(crate) fn quantized(mut m: CMatrix) -> CMatrix {
    m.quantize_f32();
    m
}
