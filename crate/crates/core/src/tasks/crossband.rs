//! Cross-band beam prediction: sub-6 GHz channels plus a few mmWave pilots
//! to the best mmWave beam.
//!
//! Both bands see the same scene from the base station, so path directions
//! agree while gains, blockage and array geometry do not. The label is the
//! DFT-codebook beam with the largest gain on subcarrier 0 of the true
//! mmWave channel.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use num_complex::Complex64;

use super::antenna::fit_options;
use super::train::{argmax, fit_classifier, flatten, rms};
use super::{quantized, split_ids, Dataset, ExperimentConfig, Metrics, Outcome, Sample, Split, Task, Variant};
use crate::channel::{add_noise_matrix, synth_freq_response, ArrayGeometry, CMatrix};
use crate::error::{bail, Result};
use crate::nn::{LayerSpec, NetworkSpec, ParamStore, Tensor};
use crate::rng::derive_seed;
use crate::scene::{generate_scene, trace_paths, Band};
use crate::selection::{apply_mask, Axis, SelectionPattern};

/// Unit-norm beams, one per 2D DFT frequency of the array.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamCodebook {
    beams: Vec<Vec<Complex64>>,
}

impl BeamCodebook {
    /// Kronecker product of row and column DFT vectors; beam `i·cols + j`
    /// has element phase `2π·(p·i/rows + q·j/cols)`.
    pub fn dft(geom: &ArrayGeometry) -> Result<Self> {
        geom.validate()?;
        let (rows, cols) = (geom.rows, geom.cols);
        let norm = 1.0 / ((rows * cols) as f64).sqrt();
        let mut beams = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let mut beam = Vec::with_capacity(rows * cols);
                for p in 0..rows {
                    for q in 0..cols {
                        let phase = 2.0 * PI * ((p * i) as f64 / rows as f64 + (q * j) as f64 / cols as f64);
                        beam.push(Complex64::from_polar(norm, phase));
                    }
                }
                beams.push(beam);
            }
        }
        Ok(Self { beams })
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn beam(&self, m: usize) -> &[Complex64] {
        &self.beams[m]
    }

    /// `|c_m^H h|²` for every beam.
    pub fn gains(&self, h: &[Complex64]) -> Result<Vec<f64>> {
        if self.beams.first().is_some_and(|b| b.len() != h.len()) {
            bail!(Usage, "channel has {} antennas, codebook expects {}", h.len(), self.beams[0].len());
        }
        Ok(self
            .beams
            .iter()
            .map(|c| c.iter().zip(h).map(|(ci, hi)| ci.conj() * hi).sum::<Complex64>().norm_sqr())
            .collect())
    }

    /// Index of the strongest beam; the lowest index on ties.
    pub fn best_beam(&self, h: &[Complex64]) -> Result<usize> {
        Ok(argmax(&self.gains(h)?))
    }
}

/// Label of a stored mmWave grid: best beam on subcarrier 0.
pub fn label(codebook: &BeamCodebook, mmwave: &CMatrix) -> Result<usize> {
    codebook.best_beam(&mmwave.column(0))
}

/// Pilot antennas form a compact sub-array: the first `r` elements in
/// row-major order, so small budgets still span one array dimension.
pub fn pilot_pattern(config: &ExperimentConfig) -> Result<SelectionPattern> {
    let n = config.crossband.mmwave_array.num_elements();
    if config.r > n {
        bail!(Config, "r = {} exceeds the {n} mmWave antennas", config.r);
    }
    SelectionPattern::from_indices(n, &(0..config.r).collect::<Vec<_>>())
}

pub fn build(config: &ExperimentConfig) -> Result<Dataset> {
    let cb = config.crossband;
    cb.mmwave_ofdm.validate()?;
    let pattern = pilot_pattern(config)?;
    let codebook = BeamCodebook::dft(&cb.mmwave_array)?;
    let scene = generate_scene(config.seeds.scene, &config.scene)?;
    let mut samples = Vec::new();
    for t in &scene.terminals {
        let mm_paths = trace_paths(&scene, t.position, scene.bs_position, Band::MmWave)?;
        if mm_paths.is_empty() {
            // No mmWave link at all: there is no beam to predict.
            continue;
        }
        let sub6_paths = trace_paths(&scene, t.position, scene.bs_position, Band::Sub6)?;
        let id = u64::from(t.id);
        let sub6 = synth_freq_response(&sub6_paths, &config.array, &config.ofdm)?.values;
        let sub6 = add_noise_matrix(&sub6, cb.sub6_snr_db, derive_seed(config.seeds.noise, "crossband.sub6_noise", id))?;
        let mmwave = quantized(synth_freq_response(&mm_paths, &cb.mmwave_array, &cb.mmwave_ofdm)?.values);
        let pilots = apply_mask(&mmwave, &pattern, Axis::Antenna)?;
        let pilots = add_noise_matrix(&pilots, cb.pilot_snr_db, derive_seed(config.seeds.noise, "crossband.pilot_noise", id))?;
        let label = label(&codebook, &mmwave)? as u32;
        samples.push(Sample {
            terminal_id: t.id,
            observation: quantized(pilots),
            target: mmwave,
            side: Some(quantized(sub6)),
            label: Some(label),
        });
    }
    let (train_ids, test_ids) = split_ids(samples.iter().map(|s| s.terminal_id).collect());
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for s in samples {
        if train_ids.binary_search(&s.terminal_id).is_ok() {
            train.push(s);
        } else {
            test.push(s);
        }
    }
    debug_assert_eq!(test.len(), test_ids.len());
    let mut info = alloc::collections::BTreeMap::new();
    info.insert("scene_terminals".into(), scene.terminals.len() as f64);
    info.insert("num_beams".into(), codebook.len() as f64);
    Ok(Dataset {
        task: Task::CrossBand,
        pattern,
        splits: vec![Split { name: "train".into(), samples: train }, Split { name: "test".into(), samples: test }],
        info,
    })
}

fn sub6_features(config: &ExperimentConfig) -> usize {
    2 * config.array.num_elements() * config.ofdm.num_subcarriers
}

fn pilot_features(config: &ExperimentConfig) -> usize {
    2 * config.r * config.crossband.mmwave_ofdm.num_subcarriers
}

/// Width of the pilot branch of FusionNet.
fn pilot_hidden(config: &ExperimentConfig) -> usize {
    (config.model.hidden / 2).max(1)
}

/// BaselineDNN: sub-6 features through one hidden layer. FusionNet: the same
/// branch next to a pilot branch, concatenated into the output layer.
pub fn network(config: &ExperimentConfig) -> NetworkSpec {
    let beams = config.crossband.mmwave_array.num_elements();
    let h = config.model.hidden;
    let f6 = sub6_features(config);
    match config.variant {
        Variant::FusionNet => {
            let fp = pilot_features(config);
            let hp = pilot_hidden(config);
            let a = NetworkSpec::new(vec![f6], vec![LayerSpec::dense(f6, h), LayerSpec::Relu]);
            let b = NetworkSpec::new(vec![fp], vec![LayerSpec::dense(fp, hp), LayerSpec::Relu]);
            NetworkSpec::new(
                vec![f6 + fp],
                vec![
                    LayerSpec::Concat { branch_a: alloc::boxed::Box::new(a), branch_b: alloc::boxed::Box::new(b) },
                    LayerSpec::dense(h + hp, beams),
                ],
            )
        }
        _ => NetworkSpec::new(vec![f6], vec![LayerSpec::dense(f6, h), LayerSpec::Relu, LayerSpec::dense(h, beams)]),
    }
}

fn input(config: &ExperimentConfig, s: &Sample) -> Result<Tensor> {
    let Some(sub6) = &s.side else {
        bail!(Usage, "cross-band sample {} has no sub-6 grid", s.terminal_id);
    };
    // One scale for both branches keeps the mmWave-to-sub-6 power ratio,
    // which is what reveals a blocked mmWave path.
    let scale = rms(sub6);
    let mut x = flatten(sub6, scale);
    if config.variant == Variant::FusionNet {
        if s.observation.rows() != config.r {
            bail!(Usage, "dataset pilots cover {} antennas, config asks for {}", s.observation.rows(), config.r);
        }
        x.extend(flatten(&s.observation, scale));
    }
    Ok(Tensor::from_vec(x))
}

pub(crate) fn labelled(config: &ExperimentConfig, samples: &[Sample]) -> Result<Vec<(Tensor, usize)>> {
    samples
        .iter()
        .map(|s| match s.label {
            Some(l) => Ok((input(config, s)?, l as usize)),
            None => bail!(Usage, "cross-band sample {} has no label", s.terminal_id),
        })
        .collect()
}

pub fn train(config: &ExperimentConfig, dataset: &Dataset) -> Result<Outcome> {
    let spec = network(config);
    let (train, test) = (dataset.train()?, dataset.test()?);
    let (train_set, test_set) = (labelled(config, train)?, labelled(config, test)?);
    let params = ParamStore::init(&spec, config.seeds.init)?;
    let fit = fit_classifier(&spec, params, &train_set, &test_set, &fit_options(config, config.epochs, "crossband.shuffle"))?;

    let mut metrics = Metrics::default();
    for (epoch, &v) in fit.curve.iter().enumerate() {
        metrics.push("test_acc_top1", epoch, v);
    }
    for (epoch, &v) in fit.train_loss.iter().enumerate().skip(1) {
        metrics.push("train_loss", epoch, v);
    }
    metrics.set("final_acc_top1", fit.best_value());
    metrics.set("best_epoch", fit.best_epoch as f64);
    metrics.set("last_acc_top1", *fit.curve.last().expect("curve has epoch 0"));
    let mut counts = vec![0usize; spec.output_shape()?[0]];
    for (_, l) in &test_set {
        counts[*l] += 1;
    }
    metrics.set("majority_acc_top1", *counts.iter().max().unwrap_or(&0) as f64 / test_set.len() as f64);
    metrics.set("num_parameters", spec.num_parameters() as f64);
    Ok(Outcome { params: fit.best, metrics, pattern: Some(dataset.pattern.clone()) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::for_task(Task::CrossBand);
        c.scene.num_terminals = 40;
        c.model.hidden = 8;
        c.epochs = 1;
        c
    }

    #[test]
    fn codebook_is_orthonormal() {
        let cb = BeamCodebook::dft(&ArrayGeometry::new(4, 8, 0.005).unwrap()).unwrap();
        assert_eq!(cb.len(), 32);
        for i in 0..cb.len() {
            for j in 0..cb.len() {
                let ip: Complex64 = cb.beam(i).iter().zip(cb.beam(j)).map(|(a, b)| a.conj() * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn codeword_channel_picks_its_beam() {
        let cb = BeamCodebook::dft(&ArrayGeometry::new(2, 4, 0.005).unwrap()).unwrap();
        for m in 0..cb.len() {
            assert_eq!(cb.best_beam(cb.beam(m)).unwrap(), m);
        }
    }

    #[test]
    fn budgets_set_pilot_width() {
        let mut c = small_config();
        for r in [2, 4, 8, 16] {
            c.r = r;
            let d = build(&c).unwrap();
            assert!(d.train().unwrap().iter().all(|s| s.observation.rows() == r));
            assert_eq!(d.pattern.indices(), (0..r).collect::<Vec<_>>());
        }
        c.r = 33;
        assert!(matches!(build(&c), Err(crate::Error::Config(_))));
    }

    #[test]
    fn labels_recompute_from_stored_channels() {
        let d = build(&small_config()).unwrap();
        let cb = BeamCodebook::dft(&small_config().crossband.mmwave_array).unwrap();
        for s in d.train().unwrap().iter().chain(d.test().unwrap()) {
            assert_eq!(label(&cb, &s.target).unwrap() as u32, s.label.unwrap());
        }
    }

    #[test]
    fn noiseless_full_pilots_give_the_label() {
        let mut c = small_config();
        c.r = 32;
        c.crossband.pilot_snr_db = f64::INFINITY;
        let d = build(&c).unwrap();
        let cb = BeamCodebook::dft(&c.crossband.mmwave_array).unwrap();
        for s in d.train().unwrap() {
            assert_eq!(cb.best_beam(&s.observation.column(0)).unwrap() as u32, s.label.unwrap());
        }
    }

    #[test]
    fn fusion_and_baseline_train() {
        let mut c = small_config();
        let d = build(&c).unwrap();
        let fusion = train(&c, &d).unwrap();
        c.variant = Variant::BaselineDnn;
        let base = train(&c, &d).unwrap();
        for out in [fusion, base] {
            let acc = out.metrics.get("final_acc_top1").unwrap();
            assert!((0.0..=1.0).contains(&acc));
        }
    }
}
