//! Terminal extrapolation: reuse a model trained on one group of terminals
//! for another group.
//!
//! Groups come from single-linkage clustering of terminal positions. Each
//! group is an antenna-extrapolation dataset of its own; a model trained on
//! the source group is fine-tuned on the target group and compared with a
//! model trained on the target group from scratch for the same number of
//! epochs.

use alloc::vec;
use alloc::vec::Vec;

use super::antenna::{self, fit_options, record_curve};
use super::train::{fit_regression, Fit};
use super::{split_ids, Dataset, ExperimentConfig, Metrics, Outcome, PatternSource, Sample, Split, Task};
use crate::error::{bail, Result};
use crate::geometry::Point3;
use crate::nn::{NetworkSpec, ParamStore, Tensor};
use crate::rng::derive_seed;
use crate::scene::{generate_scene, Scene};
use crate::selection::SelectionPattern;

/// Group id of every terminal, in scene order. Terminals closer than
/// `radius` are linked and groups are the connected components; a group's
/// id is its lowest member terminal id.
pub fn group_terminals(scene: &Scene, radius: f64) -> Result<Vec<u32>> {
    if !(radius > 0.0 && radius.is_finite()) {
        bail!(Config, "group radius must be positive and finite, got {radius}");
    }
    let n = scene.terminals.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if scene.terminals[i].position.distance(scene.terminals[j].position) < radius {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut lowest = vec![u32::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        lowest[r] = lowest[r].min(scene.terminals[i].id);
    }
    Ok((0..n).map(|i| lowest[root(&mut parent, i)]).collect())
}

/// First epoch whose value is at or below `threshold`.
pub fn epochs_to_threshold(curve: &[f64], threshold: f64) -> Option<usize> {
    curve.iter().position(|&v| v <= threshold)
}

fn centroid(scene: &Scene, ids: &[u32]) -> Point3 {
    let mut sum = Point3::new(0.0, 0.0, 0.0);
    for &id in ids {
        sum = sum + scene.terminals[id as usize].position;
    }
    sum * (1.0 / ids.len().max(1) as f64)
}

/// Terminal ids of the group holding the first terminal of `cluster`.
fn cluster_group(config: &ExperimentConfig, scene: &Scene, groups: &[u32], cluster: usize) -> Result<Vec<u32>> {
    let clusters = &config.scene.terminal_clusters;
    if cluster >= clusters.len() || clusters[cluster].count == 0 {
        bail!(Config, "terminal cluster {cluster} does not exist or is empty");
    }
    let first: usize = clusters[..cluster].iter().map(|c| c.count).sum();
    let group = groups[first];
    Ok(scene.terminals.iter().zip(groups).filter(|(_, g)| **g == group).map(|(t, _)| t.id).collect())
}

pub fn build(config: &ExperimentConfig) -> Result<Dataset> {
    if config.pattern == PatternSource::Learned {
        bail!(Config, "the terminal task uses a fixed observation pattern");
    }
    antenna::uplink_ofdm(config)?;
    let pattern = antenna::observation_pattern(config)?;
    let scene = generate_scene(config.seeds.scene, &config.scene)?;
    let groups = group_terminals(&scene, config.terminal.group_radius)?;
    let source = cluster_group(config, &scene, &groups, config.terminal.source_cluster)?;
    let target = cluster_group(config, &scene, &groups, config.terminal.target_cluster)?;

    let mut splits = Vec::new();
    for (prefix, ids) in [("source_", &source), ("", &target)] {
        let (train, test) = split_ids(ids.clone());
        for (name, ids) in [("train", train), ("test", test)] {
            let samples = ids
                .iter()
                .map(|&id| antenna::ris_sample(&scene, id, config, &pattern))
                .collect::<Result<Vec<Sample>>>()?;
            splits.push(Split { name: alloc::format!("{prefix}{name}"), samples });
        }
    }
    let mut info = alloc::collections::BTreeMap::new();
    info.insert("centroid_distance".into(), centroid(&scene, &source).distance(centroid(&scene, &target)));
    info.insert("scene_diagonal".into(), scene.bounds.diagonal());
    info.insert("source_group_size".into(), source.len() as f64);
    info.insert("target_group_size".into(), target.len() as f64);
    info.insert("same_group".into(), f64::from(u8::from(source == target)));
    Ok(Dataset { task: Task::Terminal, pattern, splits, info })
}

type Pairs = Vec<(Tensor, Tensor)>;

fn pairs(dataset: &Dataset, name: &str, pattern: &SelectionPattern) -> Result<Pairs> {
    antenna::tensors(dataset.split(name)?, pattern, pattern)
}

/// Fine-tunes `source_params` on the target group.
pub fn terminal_transfer(
    spec: &NetworkSpec,
    source_params: &ParamStore,
    target_train: &[(Tensor, Tensor)],
    target_test: &[(Tensor, Tensor)],
    finetune_epochs: usize,
    config: &ExperimentConfig,
) -> Result<TransferFit> {
    if !source_params.matches(spec) {
        bail!(Usage, "source parameters do not match the target network");
    }
    let mut params = source_params.clone();
    // A fresh generation so the copy never aliases tapes of the source.
    params.tensors_mut();
    let fit = fit_regression(spec, params, target_train, target_test, &fit_options(config, finetune_epochs, "terminal.transfer.shuffle"))?;
    Ok(TransferFit(fit))
}

/// Result of [`terminal_transfer`].
#[derive(Clone, Debug)]
pub struct TransferFit(Fit);

impl TransferFit {
    pub fn params(&self) -> &ParamStore {
        &self.0.best
    }

    /// Test NMSE per epoch, starting with the transferred model untouched.
    pub fn curve(&self) -> &[f64] {
        &self.0.curve
    }

    pub fn final_nmse(&self) -> f64 {
        self.0.best_value()
    }
}

pub fn run(config: &ExperimentConfig, dataset: &Dataset) -> Result<Outcome> {
    let spec = antenna::network(config);
    let pattern = &dataset.pattern;
    let (src_train, src_test) = (pairs(dataset, "source_train", pattern)?, pairs(dataset, "source_test", pattern)?);
    let (train, test) = (pairs(dataset, "train", pattern)?, pairs(dataset, "test", pattern)?);
    let init = ParamStore::init(&spec, config.seeds.init)?;

    let source = fit_regression(
        &spec,
        init.clone(),
        &src_train,
        &src_test,
        &fit_options(config, config.terminal.source_epochs, "terminal.source.shuffle"),
    )?;
    let scratch_init = ParamStore::init(&spec, derive_seed(config.seeds.init, "terminal.scratch.init", 0))?;
    let scratch = fit_regression(&spec, scratch_init, &train, &test, &fit_options(config, config.epochs, "terminal.scratch.shuffle"))?;
    let transfer = terminal_transfer(&spec, &source.best, &train, &test, config.epochs, config)?;

    let threshold = scratch.best_value();
    let never = (config.epochs + 1) as f64;
    let scratch_epochs = epochs_to_threshold(&scratch.curve, threshold).map_or(never, |e| e as f64);
    let transfer_epochs = epochs_to_threshold(transfer.curve(), threshold).map_or(never, |e| e as f64);

    let mut metrics = Metrics::default();
    record_curve(&mut metrics, "source_", &source);
    record_curve(&mut metrics, "scratch_", &scratch);
    record_curve(&mut metrics, "transfer_", &transfer.0);
    metrics.set("threshold_nmse", threshold);
    metrics.set("scratch_epochs_to_threshold", scratch_epochs);
    metrics.set("transfer_epochs_to_threshold", transfer_epochs);
    metrics.set("epoch_savings", scratch_epochs - transfer_epochs);
    for (k, v) in &dataset.info {
        metrics.set(k, *v);
    }
    Ok(Outcome { params: transfer.0.best, metrics, pattern: Some(pattern.clone()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{SceneParams, Terminal};

    fn scene_with(points: &[Point3]) -> Scene {
        let mut scene = generate_scene(0, &SceneParams { num_terminals: 0, ..SceneParams::default() }).unwrap();
        scene.terminals = points
            .iter()
            .enumerate()
            .map(|(i, &position)| Terminal { id: i as u32, position, group_id: None })
            .collect();
        scene
    }

    #[test]
    fn grouping_examples() {
        let one = scene_with(&[Point3::new(1.0, 1.0, 1.0)]);
        assert_eq!(group_terminals(&one, 1.0).unwrap(), vec![0]);
        let two = scene_with(&[Point3::new(1.0, 1.0, 1.0), Point3::new(1.1, 1.0, 1.0)]);
        assert_eq!(group_terminals(&two, 1.0).unwrap(), vec![0, 0]);
        // Pairwise distances 0.5, 5, 5 (approximately).
        let three = scene_with(&[Point3::new(0.0, 0.0, 1.0), Point3::new(5.0, 0.0, 1.0), Point3::new(0.5, 0.0, 1.0)]);
        assert_eq!(group_terminals(&three, 1.0).unwrap(), vec![0, 1, 0]);
        assert!(group_terminals(&three, 0.0).is_err());
    }

    #[test]
    fn chains_link_transitively() {
        let chain = scene_with(&[Point3::new(0.0, 0.0, 1.0), Point3::new(1.8, 0.0, 1.0), Point3::new(0.9, 0.0, 1.0)]);
        assert_eq!(group_terminals(&chain, 1.0).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(epochs_to_threshold(&[1.0, 0.5, 0.2, 0.1], 0.2), Some(2));
        assert_eq!(epochs_to_threshold(&[0.1, 0.5], 0.2), Some(0));
        assert_eq!(epochs_to_threshold(&[1.0, 0.5], 0.2), None);
    }

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::for_task(Task::Terminal);
        for cl in &mut c.scene.terminal_clusters {
            cl.count = 10;
            // Any two members closer than the link radius, clusters further apart.
            cl.radius = 0.2;
        }
        c.scene.num_terminals = 30;
        c.array = crate::channel::ArrayGeometry::half_wavelength(2, 4, 2.4e9).unwrap();
        c.ofdm.num_subcarriers = 16;
        c.ofdm.cp_length = 4;
        c.model.channels = 4;
        c.r = 2;
        c.epochs = 2;
        c.terminal.source_epochs = 2;
        c.terminal.group_radius = 0.45;
        c
    }

    #[test]
    fn clusters_become_separate_groups() {
        let d = build(&small_config()).unwrap();
        assert_eq!(d.info["same_group"], 0.0);
        assert_eq!(d.info["source_group_size"], 10.0);
        assert!(d.info["centroid_distance"] < 2.0);
        assert_eq!(d.split("source_train").unwrap().len(), 8);
        assert_eq!(d.test().unwrap().len(), 2);
    }

    #[test]
    fn transfer_to_source_group_does_not_get_worse() {
        let mut c = small_config();
        c.terminal.target_cluster = 0;
        let d = build(&c).unwrap();
        assert_eq!(d.info["same_group"], 1.0);
        let out = run(&c, &d).unwrap();
        let source = out.metrics.get("source_final_nmse").unwrap();
        let tuned = out.metrics.get("transfer_final_nmse").unwrap();
        assert!(tuned <= source, "{tuned} > {source}");
    }

    #[test]
    fn transfer_rejects_mismatched_source() {
        let c = small_config();
        let spec = antenna::network(&c);
        let mut other = c.clone();
        other.model.channels = 5;
        let wrong = ParamStore::init(&antenna::network(&other), 0).unwrap();
        assert!(matches!(terminal_transfer(&spec, &wrong, &[], &[], 1, &c), Err(crate::Error::Usage(_))));
    }
}
