//! Antenna extrapolation: a few uplink RIS elements to the full downlink
//! array.
//!
//! Samples are terminal-to-RIS channels. The model sees the zero-padded
//! uplink observation as `2·A` input planes (real and imaginary part per
//! element) over the subcarrier axis and predicts the downlink grid in the
//! same layout. Every sample is divided by the RMS of its observation, which
//! leaves NMSE unchanged and removes the path-loss spread between terminals.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::train::{encode, fit_regression, rms, Fit, FitOptions};
use super::{quantized, split_ids, to_db, Dataset, ExperimentConfig, Metrics, Outcome, PatternSource, Sample, Split, Task, Variant};
use crate::channel::{add_noise_matrix, synth_freq_response, OfdmConfig};
use crate::error::{bail, Result};
use crate::nn::{adam_step, backward, forward, nmse_loss, AdamConfig, AdamState, LayerSpec, NetworkSpec, ParamStore, Tensor};
use crate::rng::{self, derive_seed};
use crate::scene::{generate_scene, trace_paths, Band, Scene};
use crate::selection::{
    apply_mask, harden, random_pattern, soft_sample, soft_sample_backward, temperature_schedule, uniform_pattern,
    zero_pad, Axis, SelectionLogits, SelectionPattern,
};

/// Three convolution stacks mapping `[2·A, 1, N]` to itself. `OdeCnn`
/// wraps the middle stack in an explicit-Euler block.
pub fn network(config: &ExperimentConfig) -> NetworkSpec {
    let planes = 2 * config.array.num_elements();
    let n = config.ofdm.num_subcarriers;
    let c = config.model.channels;
    let k = config.model.kernel;
    let conv = |i, o| LayerSpec::conv(i, o, [1, k], [0, k / 2]);
    let middle = match config.variant {
        Variant::OdeCnn => LayerSpec::OdeBlock {
            inner: Box::new(NetworkSpec::new(vec![c, 1, n], vec![conv(c, c), LayerSpec::Relu])),
            steps: config.model.ode_steps,
            step_size: config.model.ode_step_size,
        },
        _ => conv(c, c),
    };
    let mut layers = vec![conv(planes, c), LayerSpec::Relu, middle];
    if config.variant != Variant::OdeCnn {
        layers.push(LayerSpec::Relu);
    }
    layers.push(conv(c, planes));
    NetworkSpec::new(vec![planes, 1, n], layers)
}

/// Uplink carrier implied by the downlink carrier and the offset.
pub fn uplink_ofdm(config: &ExperimentConfig) -> Result<OfdmConfig> {
    let up = OfdmConfig { carrier_freq: config.ofdm.carrier_freq - config.antenna.carrier_offset, ..config.ofdm };
    if !(up.carrier_freq > 0.0) {
        bail!(Config, "antenna.carrier_offset leaves a non-positive uplink carrier");
    }
    Ok(up)
}

/// Observation pattern of a dataset built from `config`.
pub fn observation_pattern(config: &ExperimentConfig) -> Result<SelectionPattern> {
    let n = config.array.num_elements();
    if config.r > n {
        bail!(Config, "r = {} exceeds the {n} antennas of the array", config.r);
    }
    match config.pattern {
        PatternSource::Uniform => uniform_pattern(n, config.r),
        PatternSource::Random => random_pattern(n, config.r, derive_seed(config.seeds.data, "antenna.pattern", 0)),
        // The model picks its own antennas, so the dataset keeps them all.
        PatternSource::Learned => uniform_pattern(n, n),
        PatternSource::Fixed => {
            if config.pattern_indices.len() != config.r {
                bail!(Config, "pattern_indices lists {} elements but r = {}", config.pattern_indices.len(), config.r);
            }
            SelectionPattern::from_indices(n, &config.pattern_indices).map_err(|e| crate::Error::Config(alloc::format!("pattern_indices: {e}")))
        }
    }
}

/// One terminal's (observation, downlink grid) pair.
pub(crate) fn ris_sample(
    scene: &Scene,
    id: u32,
    config: &ExperimentConfig,
    pattern: &SelectionPattern,
) -> Result<Sample> {
    let Some(terminal) = scene.terminal(id) else {
        bail!(Usage, "scene has no terminal {id}");
    };
    let paths = trace_paths(scene, terminal.position, scene.ris_position, Band::Sub6)?;
    let down = synth_freq_response(&paths, &config.array, &config.ofdm)?;
    let up = synth_freq_response(&paths, &config.array, &uplink_ofdm(config)?)?;
    let noisy = add_noise_matrix(&up.values, config.snr_db, derive_seed(config.seeds.noise, "antenna.noise", id.into()))?;
    Ok(Sample {
        terminal_id: id,
        observation: quantized(apply_mask(&noisy, pattern, Axis::Antenna)?),
        target: quantized(down.values),
        side: None,
        label: None,
    })
}

pub fn build(config: &ExperimentConfig) -> Result<Dataset> {
    uplink_ofdm(config)?;
    let pattern = observation_pattern(config)?;
    let scene = generate_scene(config.seeds.scene, &config.scene)?;
    let ids = scene.terminals.iter().map(|t| t.id).collect();
    let (train_ids, test_ids) = split_ids(ids);
    let mut splits = Vec::new();
    for (name, ids) in [("train", train_ids), ("test", test_ids)] {
        let samples = ids.iter().map(|&id| ris_sample(&scene, id, config, &pattern)).collect::<Result<_>>()?;
        splits.push(Split { name: name.into(), samples });
    }
    Ok(Dataset { task: Task::Antenna, pattern, splits, info: Default::default() })
}

/// `(input, target)` tensors for samples stored under `stored` and observed
/// through `pattern`, which must select a subset of `stored`.
pub(crate) fn tensors(samples: &[Sample], stored: &SelectionPattern, pattern: &SelectionPattern) -> Result<Vec<(Tensor, Tensor)>> {
    samples
        .iter()
        .map(|s| {
            let full = zero_pad(&s.observation, stored, Axis::Antenna)?;
            let obs = apply_mask(&full, pattern, Axis::Antenna)?;
            let scale = rms(&obs);
            let x = encode(&zero_pad(&obs, pattern, Axis::Antenna)?, scale);
            Ok((x, encode(&s.target, scale)))
        })
        .collect()
}

pub(crate) fn fit_options(config: &ExperimentConfig, epochs: usize, tag: &str) -> FitOptions {
    FitOptions {
        epochs,
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
        shuffle_seed: derive_seed(config.seeds.init, tag, 0),
    }
}

/// Records the NMSE curve of `fit` under `prefix`.
pub(crate) fn record_curve(metrics: &mut Metrics, prefix: &str, fit: &Fit) {
    let name = |s: &str| alloc::format!("{prefix}{s}");
    for (epoch, &v) in fit.curve.iter().enumerate() {
        metrics.push(&name("test_nmse"), epoch, v);
        metrics.push(&name("test_nmse_db"), epoch, to_db(v));
    }
    for (epoch, &v) in fit.train_loss.iter().enumerate().skip(1) {
        metrics.push(&name("train_loss"), epoch, v);
    }
    metrics.set(&name("final_nmse"), fit.best_value());
    metrics.set(&name("final_nmse_db"), to_db(fit.best_value()));
    metrics.set(&name("best_epoch"), fit.best_epoch as f64);
    metrics.set(&name("last_nmse"), *fit.curve.last().expect("curve has epoch 0"));
    metrics.set(&name("initial_nmse"), fit.curve[0]);
}

pub fn train(config: &ExperimentConfig, dataset: &Dataset) -> Result<Outcome> {
    let spec = network(config);
    let (train, test) = (dataset.train()?, dataset.test()?);
    let mut metrics = Metrics::default();
    let pattern = if config.pattern == PatternSource::Learned {
        let (pattern, logits) = search_pattern(config, &spec, train, &dataset.pattern)?;
        for (i, l) in logits.iter().enumerate() {
            metrics.push("selection_logit", i, *l);
        }
        pattern
    } else {
        dataset.pattern.clone()
    };
    let train_set = tensors(train, &dataset.pattern, &pattern)?;
    let test_set = tensors(test, &dataset.pattern, &pattern)?;
    let params = ParamStore::init(&spec, config.seeds.init)?;
    let fit = fit_regression(&spec, params, &train_set, &test_set, &fit_options(config, config.epochs, "antenna.shuffle"))?;
    record_curve(&mut metrics, "", &fit);
    metrics.set("num_parameters", spec.num_parameters() as f64);
    Ok(Outcome { params: fit.best, metrics, pattern: Some(pattern) })
}

/// Joint training of the network and relaxed selection logits; returns the
/// hardened pattern and the final logits. The network is discarded.
fn search_pattern(
    config: &ExperimentConfig,
    spec: &NetworkSpec,
    train: &[Sample],
    stored: &SelectionPattern,
) -> Result<(SelectionPattern, Vec<f64>)> {
    let all = uniform_pattern(stored.len(), stored.len())?;
    let set = tensors(train, stored, &all)?;
    if set.is_empty() {
        bail!(Usage, "antenna dataset has an empty train split");
    }
    let n_ant = stored.len();
    let r = config.r;
    if r > n_ant {
        bail!(Config, "r = {r} exceeds the {n_ant} antennas of the array");
    }
    let plane = set[0].0.len() / (2 * n_ant);
    let sel = config.selection;

    let mut params = ParamStore::init(spec, derive_seed(config.seeds.init, "antenna.search.init", 0))?;
    let mut logits = ParamStore::from_named(0, vec![("logits".into(), Tensor::from_vec(vec![0.0; n_ant]))])?;
    let net_cfg = AdamConfig { lr: config.learning_rate, ..AdamConfig::default() };
    let logit_cfg = AdamConfig { lr: sel.logit_learning_rate, ..AdamConfig::default() };
    let mut net_state = AdamState::new(&params);
    let mut logit_state = AdamState::new(&logits);

    let batches_per_epoch = set.len().div_ceil(config.batch_size);
    let total_steps = sel.search_epochs * batches_per_epoch;
    let mut order: Vec<usize> = (0..set.len()).collect();
    let shuffle_seed = derive_seed(config.seeds.init, "antenna.search.shuffle", 0);
    let gumbel_seed = derive_seed(config.seeds.data, "antenna.search.gumbel", 0);
    let mut step = 0usize;
    for epoch in 0..sel.search_epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng::indexed_stream(shuffle_seed, "epoch", epoch as u64));
        for batch in order.chunks(config.batch_size) {
            let temperature = temperature_schedule(sel.temperature_start, sel.temperature_end, total_steps, step);
            let relaxed = SelectionLogits::new(logits.tensors()[0].data().to_vec(), temperature)?;
            let mut net_grads = params.zeros_like();
            let mut logit_grad = vec![0.0; n_ant];
            for (j, &i) in batch.iter().enumerate() {
                let (x_full, y) = &set[i];
                let draw = derive_seed(gumbel_seed, "draw", (step * config.batch_size + j) as u64);
                let (mask, tape) = soft_sample(&relaxed, r, draw)?;
                let mut x = x_full.clone();
                for (a, chunk) in x.data_mut().chunks_mut(2 * plane).enumerate() {
                    for v in chunk {
                        *v *= mask[a];
                    }
                }
                let (out, fwd) = forward(spec, &params, &x)?;
                let (_, g) = nmse_loss(&out, y)?;
                let grads = backward(spec, &params, &fwd, &g)?;
                net_grads.add_assign(&grads.params);
                let mask_grad: Vec<f64> = grads
                    .input
                    .data()
                    .chunks(2 * plane)
                    .zip(x_full.data().chunks(2 * plane))
                    .map(|(gx, xv)| gx.iter().zip(xv).map(|(a, b)| a * b).sum())
                    .collect();
                for (acc, v) in logit_grad.iter_mut().zip(soft_sample_backward(&tape, &mask_grad)?) {
                    *acc += v;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            net_grads.scale_assign(inv);
            let mut lg = logits.zeros_like();
            for (dst, v) in lg.tensors_mut()[0].data_mut().iter_mut().zip(&logit_grad) {
                *dst = v * inv;
            }
            adam_step(&mut params, &net_grads, &mut net_state, &net_cfg)?;
            adam_step(&mut logits, &lg, &mut logit_state, &logit_cfg)?;
            step += 1;
        }
    }
    let final_logits = logits.tensors()[0].data().to_vec();
    let hardened = harden(&SelectionLogits::new(final_logits.clone(), sel.temperature_end)?, r)?;
    Ok((hardened, final_logits))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::for_task(Task::Antenna);
        c.scene.num_terminals = 10;
        c.array = crate::channel::ArrayGeometry::half_wavelength(2, 4, 2.4e9).unwrap();
        c.ofdm.num_subcarriers = 16;
        c.ofdm.cp_length = 4;
        c.model.channels = 4;
        c.r = 2;
        c.epochs = 2;
        c
    }

    #[test]
    fn budgets_share_targets() {
        let mut c = small_config();
        let d2 = build(&c).unwrap();
        c.r = 4;
        let d4 = build(&c).unwrap();
        let (a, b) = (d2.train().unwrap(), d4.train().unwrap());
        assert_eq!(a.len(), 8);
        assert_eq!(d2.test().unwrap().len(), 2);
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.target, y.target);
            assert_eq!(x.observation.rows(), 2);
            assert_eq!(y.observation.rows(), 4);
        }
    }

    #[test]
    fn too_large_budget_is_config_error() {
        let mut c = small_config();
        c.r = 9;
        assert!(matches!(build(&c), Err(crate::Error::Config(_))));
    }

    #[test]
    fn fixed_pattern_comes_from_the_config() {
        let mut c = small_config();
        c.pattern = PatternSource::Fixed;
        c.pattern_indices = vec![5, 1];
        assert_eq!(observation_pattern(&c).unwrap().indices(), vec![1, 5]);
        c.pattern_indices = vec![5];
        assert!(matches!(observation_pattern(&c), Err(crate::Error::Config(_))));
        c.pattern_indices = vec![5, 8];
        assert!(matches!(observation_pattern(&c), Err(crate::Error::Config(_))));
    }

    #[test]
    fn full_noiseless_observation_equals_target() {
        let mut c = small_config();
        c.r = 8;
        c.snr_db = f64::INFINITY;
        c.antenna.carrier_offset = 0.0;
        let d = build(&c).unwrap();
        for s in d.train().unwrap() {
            assert_eq!(s.observation, s.target);
        }
    }

    #[test]
    fn variants_have_equal_parameter_counts() {
        let mut c = small_config();
        let cnn = network(&c);
        c.variant = Variant::OdeCnn;
        let ode = network(&c);
        assert_eq!(cnn.num_parameters(), ode.num_parameters());
        assert_eq!(cnn.output_shape().unwrap(), vec![16, 1, 16]);
        assert_eq!(ode.output_shape().unwrap(), vec![16, 1, 16]);
    }

    #[test]
    fn learned_pattern_has_budget() {
        let mut c = small_config();
        c.pattern = PatternSource::Learned;
        c.selection.search_epochs = 2;
        let d = build(&c).unwrap();
        let out = train(&c, &d).unwrap();
        assert_eq!(out.pattern.unwrap().budget(), 2);
    }

    #[test]
    fn evaluate_reproduces_the_best_checkpoint() {
        let c = small_config();
        let d = build(&c).unwrap();
        let out = train(&c, &d).unwrap();
        let scores = super::super::evaluate(&c, &d, &out.params, out.pattern.as_ref()).unwrap();
        assert_eq!(scores["test_nmse"], out.metrics.get("final_nmse").unwrap());
        let mut wide = c.clone();
        wide.model.channels = 5;
        let wrong = ParamStore::init(&network(&wide), 0).unwrap();
        assert!(matches!(super::super::evaluate(&c, &d, &wrong, None), Err(crate::Error::Usage(_))));
    }
}
