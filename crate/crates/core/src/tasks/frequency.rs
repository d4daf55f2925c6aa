//! In-band frequency extrapolation: pilot subcarriers to the full band.
//!
//! Channels are base-station-to-terminal mmWave responses, timing-aligned to
//! the first arrival and with delays on the sample grid. The target is what
//! a least-squares estimator sees through `observe_with_cp`, so with a short
//! CP it carries the inter-symbol interference of a fixed probe sequence.
//! The network refines the linear-interpolation estimate: its convolution
//! stacks sit inside a one-step residual block whose last layer starts at
//! zero, so an untrained model reproduces the baseline.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use super::antenna::{fit_options, record_curve};
use super::train::{encode, fit_regression, rms};
use super::{quantized, split_ids, to_db, CpMode, Dataset, ExperimentConfig, Metrics, Outcome, Sample, Split, Task, Variant};
use crate::channel::{add_noise_matrix, impulse_response, nmse, observe_with_cp, CMatrix, ImpulseResponse, OfdmConfig};
use crate::error::{bail, Result};
use crate::nn::{LayerSpec, NetworkSpec, ParamStore, Tensor};
use crate::rng::derive_seed;
use crate::scene::{generate_scene, trace_paths, Band, PathSet, Scene};
use crate::selection::{apply_mask, uniform_pattern, Axis, SelectionPattern};

/// Piecewise-linear interpolation of real and imaginary parts over the
/// subcarrier index, per antenna. Subcarriers outside the pilot span take
/// the nearest pilot's value.
pub fn interpolate_baseline(observation: &CMatrix, pattern: &SelectionPattern) -> Result<CMatrix> {
    let pilots = pattern.indices();
    if pilots.len() < 2 {
        bail!(Usage, "interpolation needs at least 2 pilots, pattern has {}", pilots.len());
    }
    if observation.cols() != pilots.len() {
        bail!(Usage, "observation has {} columns, pattern selects {}", observation.cols(), pilots.len());
    }
    let n = pattern.len();
    let mut out = CMatrix::zeros(observation.rows(), n);
    for a in 0..observation.rows() {
        let obs = observation.row(a);
        let row = out.row_mut(a);
        let mut seg = 0;
        for (k, v) in row.iter_mut().enumerate() {
            *v = if k <= pilots[0] {
                obs[0]
            } else if k >= pilots[pilots.len() - 1] {
                obs[pilots.len() - 1]
            } else {
                while pilots[seg + 1] < k {
                    seg += 1;
                }
                let (k0, k1) = (pilots[seg], pilots[seg + 1]);
                let t = (k - k0) as f64 / (k1 - k0) as f64;
                obs[seg] * (1.0 - t) + obs[seg + 1] * t
            };
        }
    }
    Ok(out)
}

/// Pilot pattern for the configured sample rate.
pub fn pilot_pattern(config: &ExperimentConfig) -> Result<SelectionPattern> {
    let n = config.ofdm.num_subcarriers;
    let rate = config.frequency.sample_rate;
    if !(rate > 0.0 && rate <= 1.0) {
        bail!(Config, "frequency.sample_rate must lie in (0, 1], got {rate}");
    }
    let pilots = (rate * n as f64).round() as usize;
    if pilots > n {
        bail!(Config, "pilot budget {pilots} exceeds {n} subcarriers");
    }
    if pilots < 2 {
        bail!(Config, "sample rate {rate} leaves fewer than 2 pilots");
    }
    uniform_pattern(n, pilots)
}

/// OFDM settings of the configured CP regime.
pub fn cp_ofdm(config: &ExperimentConfig) -> Result<OfdmConfig> {
    let f = config.frequency;
    if f.insufficient_cp + f.isi_margin > f.enough_cp {
        bail!(Config, "frequency.enough_cp must cover insufficient_cp + isi_margin");
    }
    let cp_length = match f.cp_mode {
        CpMode::Enough => f.enough_cp,
        CpMode::Insufficient => f.insufficient_cp,
    };
    let ofdm = OfdmConfig { cp_length, ..config.ofdm };
    ofdm.validate()?;
    Ok(ofdm)
}

/// Paths with delays measured from the first arrival and rounded to the
/// sample grid.
pub fn aligned_paths(scene: &Scene, terminal: u32, ofdm: &OfdmConfig) -> Result<Option<PathSet>> {
    let Some(t) = scene.terminal(terminal) else {
        bail!(Usage, "scene has no terminal {terminal}");
    };
    let mut paths = trace_paths(scene, t.position, scene.bs_position, Band::MmWave)?;
    if paths.is_empty() {
        return Ok(None);
    }
    let first = paths.iter().map(|p| p.delay).fold(f64::INFINITY, f64::min);
    for p in &mut paths.paths {
        p.delay -= first;
    }
    paths.quantize_delays(ofdm.bandwidth());
    Ok(Some(paths))
}

/// Impulse response of a terminal if its delay spread falls in the band the
/// dataset keeps: long enough to overrun the short CP by the margin, short
/// enough for the long CP.
fn kept_response(scene: &Scene, id: u32, config: &ExperimentConfig) -> Result<Option<ImpulseResponse>> {
    let Some(paths) = aligned_paths(scene, id, &config.ofdm)? else {
        return Ok(None);
    };
    let ir = impulse_response(&paths, &config.array, &config.ofdm)?;
    let spread = ir.num_taps() - 1;
    let f = config.frequency;
    Ok((spread >= f.insufficient_cp + f.isi_margin && spread <= f.enough_cp).then_some(ir))
}

pub fn build(config: &ExperimentConfig) -> Result<Dataset> {
    let pattern = pilot_pattern(config)?;
    let ofdm = cp_ofdm(config)?;
    let scene = generate_scene(config.seeds.scene, &config.scene)?;
    let probe_seed = derive_seed(config.seeds.data, "frequency.probe", 0);
    let mut kept = Vec::new();
    for t in &scene.terminals {
        if let Some(ir) = kept_response(&scene, t.id, config)? {
            kept.push((t.id, ir));
        }
    }
    let (train_ids, test_ids) = split_ids(kept.iter().map(|(id, _)| *id).collect());
    let mut splits = Vec::new();
    for (name, ids) in [("train", train_ids), ("test", test_ids)] {
        let mut samples = Vec::with_capacity(ids.len());
        for id in ids {
            let ir = &kept.iter().find(|(k, _)| *k == id).expect("kept id").1;
            let target = quantized(observe_with_cp(ir, &ofdm, probe_seed)?.values);
            let noise_seed = derive_seed(config.seeds.noise, "frequency.noise", id.into());
            let observation = add_noise_matrix(&apply_mask(&target, &pattern, Axis::Subcarrier)?, config.snr_db, noise_seed)?;
            samples.push(Sample { terminal_id: id, observation: quantized(observation), target, side: None, label: None });
        }
        splits.push(Split { name: name.into(), samples });
    }
    let mut info = alloc::collections::BTreeMap::new();
    info.insert("kept_terminals".into(), kept.len() as f64);
    info.insert("scene_terminals".into(), scene.terminals.len() as f64);
    Ok(Dataset { task: Task::FrequencyInBand, pattern, splits, info })
}

/// Residual refinement network over `[2·A, 1, N]`.
pub fn network(config: &ExperimentConfig) -> NetworkSpec {
    let planes = 2 * config.array.num_elements();
    let n = config.ofdm.num_subcarriers;
    let c = config.model.channels;
    let k = config.model.kernel;
    let conv = |i, o| LayerSpec::conv(i, o, [1, k], [0, k / 2]);
    let inner = NetworkSpec::new(
        vec![planes, 1, n],
        vec![conv(planes, c), LayerSpec::Relu, conv(c, c), LayerSpec::Relu, conv(c, planes)],
    );
    let (steps, step_size) = match config.variant {
        Variant::OdeCnn => (config.model.ode_steps, config.model.ode_step_size),
        _ => (1, 1.0),
    };
    NetworkSpec::new(vec![planes, 1, n], vec![LayerSpec::OdeBlock { inner: Box::new(inner), steps, step_size }])
}

/// Mean per-sample NMSE of the interpolation baseline.
pub fn baseline_nmse(samples: &[Sample], pattern: &SelectionPattern) -> Result<f64> {
    if samples.is_empty() {
        bail!(Usage, "baseline needs at least one sample");
    }
    let mut total = 0.0;
    for s in samples {
        total += nmse(&interpolate_baseline(&s.observation, pattern)?, &s.target)?;
    }
    Ok(total / samples.len() as f64)
}

/// `(interpolated input, target)` tensors, both scaled by the observation RMS.
pub(crate) fn tensors(samples: &[Sample], pattern: &SelectionPattern) -> Result<Vec<(Tensor, Tensor)>> {
    samples
        .iter()
        .map(|s| {
            let scale = rms(&s.observation);
            let estimate = interpolate_baseline(&s.observation, pattern)?;
            Ok((encode(&estimate, scale), encode(&s.target, scale)))
        })
        .collect()
}

pub fn train(config: &ExperimentConfig, dataset: &Dataset) -> Result<Outcome> {
    let spec = network(config);
    let pattern = &dataset.pattern;
    let (train, test) = (dataset.train()?, dataset.test()?);
    let (train_set, test_set) = (tensors(train, pattern)?, tensors(test, pattern)?);

    let mut params = ParamStore::init(&spec, config.seeds.init)?;
    let last = params.len() - 2;
    for t in &mut params.tensors_mut()[last..] {
        t.scale_assign(0.0);
    }
    let fit = fit_regression(&spec, params, &train_set, &test_set, &fit_options(config, config.epochs, "frequency.shuffle"))?;

    let mut metrics = Metrics::default();
    record_curve(&mut metrics, "", &fit);
    let baseline = baseline_nmse(test, pattern)?;
    metrics.push("baseline_nmse", 0, baseline);
    metrics.set("baseline_nmse", baseline);
    metrics.set("baseline_nmse_db", to_db(baseline));
    metrics.set("gap", baseline - fit.best_value());
    metrics.set("num_samples", dataset.num_samples() as f64);
    metrics.set("num_parameters", spec.num_parameters() as f64);
    Ok(Outcome { params: fit.best, metrics, pattern: Some(pattern.clone()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::synth_freq_response;
    use num_complex::Complex64;

/// `H[k]` of a single tap of gain one at `delay_taps`, `k` in `0..n`,
    /// on the centered grid.
    fn single_tap_row(n: usize, delay_taps: usize) -> Vec<Complex64> {
        crate::channel::centered_dft(&{
            let mut taps = vec![Complex64::new(0.0, 0.0); delay_taps + 1];
            taps[delay_taps] = Complex64::new(1.0, 0.0);
            taps
        }, n)
    }

    #[test]
    fn constant_channel_is_exact() {
        let pattern = uniform_pattern(16, 4).unwrap();
        let obs = CMatrix::from_fn(2, 4, |a, _| Complex64::new(1.0 + a as f64, -0.5));
        let est = interpolate_baseline(&obs, &pattern).unwrap();
        let truth = CMatrix::from_fn(2, 16, |a, _| Complex64::new(1.0 + a as f64, -0.5));
        assert_eq!(nmse(&est, &truth).unwrap(), 0.0);
    }

    #[test]
    fn linear_channel_exact_on_pilot_span() {
        let pattern = uniform_pattern(32, 8).unwrap();
        let line = |k: usize| Complex64::new(0.3 * k as f64 - 2.0, 1.0 - 0.1 * k as f64);
        let idx = pattern.indices();
        let obs = CMatrix::from_fn(1, 8, |_, j| line(idx[j]));
        let est = interpolate_baseline(&obs, &pattern).unwrap();
        for k in idx[0]..=idx[7] {
            assert!((est[(0, k)] - line(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn single_path_leaves_error() {
        let n = 64;
        let pattern = uniform_pattern(n, n / 4).unwrap();
        let truth = CMatrix::from_vec(1, n, single_tap_row(n, 8)).unwrap();
        let obs = apply_mask(&truth, &pattern, Axis::Subcarrier).unwrap();
        let est = interpolate_baseline(&obs, &pattern).unwrap();
        assert!(nmse(&est, &truth).unwrap() > 0.0);
    }

    #[test]
    fn too_few_pilots_is_usage_error() {
        let pattern = uniform_pattern(8, 1).unwrap();
        let obs = CMatrix::zeros(1, 1);
        assert!(matches!(interpolate_baseline(&obs, &pattern), Err(crate::Error::Usage(_))));
    }

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::for_task(Task::FrequencyInBand);
        c.scene.num_terminals = 40;
        c.model.channels = 4;
        c.epochs = 1;
        c
    }

    #[test]
    fn cp_modes_share_terminals_and_pilots() {
        let mut c = small_config();
        c.frequency.cp_mode = CpMode::Enough;
        let en = build(&c).unwrap();
        c.frequency.cp_mode = CpMode::Insufficient;
        let inc = build(&c).unwrap();
        assert_eq!(en.pattern, inc.pattern);
        let (a, b) = (en.train().unwrap(), inc.train().unwrap());
        assert!(!a.is_empty());
        assert_eq!(a.len(), b.len());
        let mut differ = false;
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.terminal_id, y.terminal_id);
            differ |= x.target != y.target;
        }
        assert!(differ);
    }

    #[test]
    fn enough_cp_target_is_true_response() {
        let mut c = small_config();
        c.frequency.cp_mode = CpMode::Enough;
        let d = build(&c).unwrap();
        let scene = generate_scene(c.seeds.scene, &c.scene).unwrap();
        for s in d.train().unwrap().iter().take(5) {
            let paths = aligned_paths(&scene, s.terminal_id, &c.ofdm).unwrap().unwrap();
            let truth = synth_freq_response(&paths, &c.array, &c.ofdm).unwrap();
            let peak = truth.values.as_slice().iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (a, b) in s.target.as_slice().iter().zip(truth.values.as_slice()) {
                assert!((a - b).norm() <= 1e-6 * peak);
            }
        }
    }

    #[test]
    fn sample_rates_set_observation_width() {
        let mut c = small_config();
        c.ofdm.num_subcarriers = 1024;
        for (rate, width) in [(0.125, 128), (0.25, 256), (0.5, 512)] {
            c.frequency.sample_rate = rate;
            assert_eq!(pilot_pattern(&c).unwrap().budget(), width);
        }
        c.frequency.sample_rate = 1.5;
        assert!(matches!(pilot_pattern(&c), Err(crate::Error::Config(_))));
    }

    #[test]
    fn untrained_network_reproduces_baseline() {
        let c = small_config();
        let d = build(&c).unwrap();
        let out = train(&ExperimentConfig { epochs: 1, ..c }, &d).unwrap();
        let initial = out.metrics.get("initial_nmse").unwrap();
        let baseline = out.metrics.get("baseline_nmse").unwrap();
        assert!((initial - baseline).abs() <= 1e-9 * baseline.max(1e-12), "{initial} vs {baseline}");
    }
}
