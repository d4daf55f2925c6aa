//! Mini-batch Adam loops shared by the pipelines.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;

use crate::channel::CMatrix;
use crate::error::{bail, Error, Result};
use crate::nn::{
    adam_step, backward_into, cross_entropy_loss, forward, nmse_loss, AdamConfig, AdamState, NetworkSpec,
    ParamStore, Tensor,
};
use crate::rng;

/// NMSE above which a run counts as diverged.
pub(crate) const DIVERGENCE_NMSE: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

/// Per-epoch evaluation of one run. Index 0 is the untrained model.
#[derive(Clone, Debug)]
pub(crate) struct Fit {
    pub best: ParamStore,
    pub best_epoch: usize,
    pub curve: Vec<f64>,
    pub train_loss: Vec<f64>,
}

impl Fit {
    pub fn best_value(&self) -> f64 {
        self.curve[self.best_epoch]
    }
}

/// `[2·rows, 1, cols]` tensor of real and imaginary planes, divided by `scale`.
pub(crate) fn encode(m: &CMatrix, scale: f64) -> Tensor {
    let (rows, cols) = m.shape();
    let mut data = Vec::with_capacity(2 * rows * cols);
    for i in 0..rows {
        data.extend(m.row(i).iter().map(|v| v.re / scale));
        data.extend(m.row(i).iter().map(|v| v.im / scale));
    }
    Tensor::new(vec![2 * rows, 1, cols], data).expect("encoded shape")
}

/// Flat `[re, im]` interleaving of every entry, divided by `scale`.
pub(crate) fn flatten(m: &CMatrix, scale: f64) -> Vec<f64> {
    m.as_slice().iter().flat_map(|v| [v.re / scale, v.im / scale]).collect()
}

/// Root mean power, floored away from zero.
pub(crate) fn rms(m: &CMatrix) -> f64 {
    m.mean_power().sqrt().max(f64::MIN_POSITIVE)
}

pub(crate) fn check_nonempty(train: usize, test: usize) -> Result<()> {
    if train == 0 || test == 0 {
        bail!(Usage, "dataset needs non-empty train and test splits (got {train} and {test})");
    }
    Ok(())
}

pub(crate) fn diverged(epoch: usize, nmse: f64) -> Error {
    Error::Diverged { config_hash: String::new(), epoch, nmse }
}

/// Mean per-sample NMSE of the network on `set`.
pub(crate) fn eval_nmse(spec: &NetworkSpec, params: &ParamStore, set: &[(Tensor, Tensor)]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in set {
        let (out, _) = forward(spec, params, x)?;
        total += nmse_loss(&out, y)?.0;
    }
    Ok(total / set.len() as f64)
}

/// [`eval_nmse`] after checking that `params` belong to `spec`.
pub(crate) fn eval_checked(spec: &NetworkSpec, params: &ParamStore, set: &[(Tensor, Tensor)]) -> Result<f64> {
    if !params.matches(spec) {
        bail!(Usage, "parameters do not match the configured network");
    }
    eval_nmse(spec, params, set)
}

/// Fraction of `set` whose largest logit is the label.
pub(crate) fn eval_accuracy(spec: &NetworkSpec, params: &ParamStore, set: &[(Tensor, usize)]) -> Result<f64> {
    let mut hits = 0usize;
    for (x, label) in set {
        let (out, _) = forward(spec, params, x)?;
        if argmax(out.data()) == *label {
            hits += 1;
        }
    }
    Ok(hits as f64 / set.len() as f64)
}

/// Index of the largest value; the first one on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Shared epoch loop. `loss_grad` maps a sample index to its loss and the
/// gradient with respect to the network output; `evaluate` scores the
/// current parameters; `better` says whether a score beats another and
/// `diverges` whether it ends the run.
#[allow(clippy::too_many_arguments)]
fn fit<L, E, B>(
    spec: &NetworkSpec,
    mut params: ParamStore,
    inputs: &[&Tensor],
    opts: &FitOptions,
    mut loss_grad: L,
    mut evaluate: E,
    better: B,
    diverges: fn(f64) -> bool,
) -> Result<Fit>
where
    L: FnMut(usize, &Tensor) -> Result<(f64, Tensor)>,
    E: FnMut(&ParamStore) -> Result<f64>,
    B: Fn(f64, f64) -> bool,
{
    if opts.batch_size == 0 {
        bail!(Config, "batch_size must be at least 1");
    }
    let cfg = AdamConfig { lr: opts.learning_rate, ..AdamConfig::default() };
    let mut state = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let initial = evaluate(&params)?;
    let mut curve = vec![initial];
    let mut train_loss = vec![f64::NAN];
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for epoch in 1..=opts.epochs {
        let mut shuffle = rng::indexed_stream(opts.shuffle_seed, "train.shuffle", epoch as u64);
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            grads.scale_assign(0.0);
            for &i in batch {
                let (out, tape) = forward(spec, &params, inputs[i])?;
                let (loss, g) = loss_grad(i, &out)?;
                epoch_loss += loss;
                backward_into(spec, &params, &tape, &g, &mut grads)?;
            }
            grads.scale_assign(1.0 / batch.len() as f64);
            adam_step(&mut params, &grads, &mut state, &cfg)?;
        }
        let score = evaluate(&params)?;
        if diverges(score) || !params.is_finite() {
            return Err(diverged(epoch, score));
        }
        train_loss.push(epoch_loss / inputs.len() as f64);
        curve.push(score);
        if better(score, curve[best_epoch]) {
            best = params.clone();
            best_epoch = epoch;
        }
    }
    Ok(Fit { best, best_epoch, curve, train_loss })
}

/// Trains on NMSE and keeps the parameters with the lowest test NMSE.
pub(crate) fn fit_regression(
    spec: &NetworkSpec,
    params: ParamStore,
    train: &[(Tensor, Tensor)],
    test: &[(Tensor, Tensor)],
    opts: &FitOptions,
) -> Result<Fit> {
    check_nonempty(train.len(), test.len())?;
    let inputs: Vec<&Tensor> = train.iter().map(|(x, _)| x).collect();
    fit(
        spec,
        params,
        &inputs,
        opts,
        |i, out| nmse_loss(out, &train[i].1),
        |p| eval_nmse(spec, p, test),
        |a, b| a < b,
        |v| !(v <= DIVERGENCE_NMSE),
    )
}

/// Trains on cross-entropy and keeps the parameters with the highest test
/// top-1 accuracy.
pub(crate) fn fit_classifier(
    spec: &NetworkSpec,
    params: ParamStore,
    train: &[(Tensor, usize)],
    test: &[(Tensor, usize)],
    opts: &FitOptions,
) -> Result<Fit> {
    check_nonempty(train.len(), test.len())?;
    let inputs: Vec<&Tensor> = train.iter().map(|(x, _)| x).collect();
    fit(
        spec,
        params,
        &inputs,
        opts,
        |i, out| cross_entropy_loss(out, train[i].1),
        |p| eval_accuracy(spec, p, test),
        |a, b| a > b,
        |v| !v.is_finite(),
    )
}
