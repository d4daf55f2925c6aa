//! Subspace selection: which antennas or subcarriers get observed.
//!
//! Fixed patterns (uniform, random) and a learnable sampler. The sampler
//! relaxes a budget-`r` subset draw into a soft mask in `[0, 1]^N` so that a
//! network loss can push gradients into per-element logits; [`harden`] turns
//! the logits back into a binary pattern for evaluation.

use alloc::vec;
use alloc::vec::Vec;

// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::CMatrix;
use crate::error::{bail, Result};
use crate::rng;

/// Binary mask over `N` elements with exactly `budget` ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PatternRepr", into = "PatternRepr")]
pub struct SelectionPattern {
    mask: Vec<bool>,
    budget: usize,
}

/// Serialized form: the full length and the selected indices.
#[derive(Serialize, Deserialize)]
struct PatternRepr {
    len: usize,
    indices: Vec<usize>,
}

impl TryFrom<PatternRepr> for SelectionPattern {
    type Error = crate::Error;
    fn try_from(r: PatternRepr) -> Result<Self> {
        SelectionPattern::from_indices(r.len, &r.indices)
    }
}

impl From<SelectionPattern> for PatternRepr {
    fn from(p: SelectionPattern) -> Self {
        PatternRepr { len: p.len(), indices: p.indices() }
    }
}

impl SelectionPattern {
    pub fn from_mask(mask: Vec<bool>) -> Result<Self> {
        let budget = mask.iter().filter(|&&b| b).count();
        if budget == 0 {
            bail!(Usage, "selection pattern must select at least one element");
        }
        Ok(Self { mask, budget })
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = vec![false; len];
        for &i in indices {
            if i >= len {
                bail!(Usage, "selected index {i} out of range for length {len}");
            }
            if mask[i] {
                bail!(Usage, "selected index {i} repeated");
            }
            mask[i] = true;
        }
        Self::from_mask(mask)
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Selected indices, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
    }
}

fn check_budget(n: usize, r: usize) -> Result<()> {
    if r == 0 {
        bail!(Usage, "selection budget must be positive");
    }
    if r > n {
        bail!(Usage, "selection budget {r} exceeds dimension {n}");
    }
    Ok(())
}

/// Ones at `floor(k·N/r)` for `k = 0..r`.
pub fn uniform_pattern(n: usize, r: usize) -> Result<SelectionPattern> {
    check_budget(n, r)?;
    let indices: Vec<usize> = (0..r).map(|k| k * n / r).collect();
    SelectionPattern::from_indices(n, &indices)
}

/// Uniformly random `r`-subset, deterministic in `seed`.
pub fn random_pattern(n: usize, r: usize, seed: u64) -> Result<SelectionPattern> {
    check_budget(n, r)?;
    let mut rng = rng::stream(seed, "selection.random_pattern");
    let picked = index::sample(&mut rng, n, r).into_vec();
    SelectionPattern::from_indices(n, &picked)
}

/// Per-element selection scores with a softmax temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionLogits {
    pub logits: Vec<f64>,
    pub temperature: f64,
}

impl SelectionLogits {
    pub fn new(logits: Vec<f64>, temperature: f64) -> Result<Self> {
        let s = Self { logits, temperature };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            bail!(Usage, "temperature must be positive and finite");
        }
        if self.logits.iter().any(|v| !v.is_finite()) {
            bail!(Usage, "selection logits must be finite");
        }
        Ok(())
    }
}

/// Everything [`soft_sample_backward`] needs from a forward draw.
#[derive(Clone, Debug)]
pub struct SoftSampleTape {
    temperature: f64,
    /// `scores / T` before each draw.
    alphas: Vec<Vec<f64>>,
    /// Softmax output of each successive draw.
    draws: Vec<Vec<f64>>,
    /// Unclamped sum of the draws.
    raw: Vec<f64>,
}

/// Relaxed budget-`r` sample.
///
/// Gumbel noise perturbs the logits once; then `r` draws
/// `y = softmax(scores / T)` are taken in sequence, each one suppressing what
/// it took by adding `ln(1 - y)` to the running scores.
/// The draws are summed and clamped to `[0, 1]`. As the temperature goes to
/// zero every draw becomes one-hot on a distinct element, so the mask tends
/// to the top-`r` indicator of the perturbed logits.
pub fn soft_sample(logits: &SelectionLogits, r: usize, seed: u64) -> Result<(Vec<f64>, SoftSampleTape)> {
    logits.validate()?;
    check_budget(logits.len(), r)?;
    let n = logits.len();
    let t = logits.temperature;
    let mut rng = rng::stream(seed, "selection.gumbel");
    let mut scores: Vec<f64> = logits
        .logits
        .iter()
        .map(|&l| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            l - (-u.ln()).ln()
        })
        .collect();

    let mut alphas = Vec::with_capacity(r);
    let mut draws = Vec::with_capacity(r);
    let mut raw = vec![0.0; n];
    for _ in 0..r {
        let alpha: Vec<f64> = scores.iter().map(|s| s / t).collect();
        let y = softmax(&alpha);
        for i in 0..n {
            raw[i] += y[i];
            scores[i] += log_one_minus(&alpha, &y, i);
        }
        alphas.push(alpha);
        draws.push(y);
    }
    let mask = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok((mask, SoftSampleTape { temperature: t, alphas, draws, raw }))
}

/// `ln(1 - y_i)`, exact even when `y_i` rounds to one.
fn log_one_minus(alpha: &[f64], y: &[f64], i: usize) -> f64 {
    if y[i] <= 0.5 {
        (1.0 - y[i]).ln()
    } else {
        log_sum_exp_except(alpha, Some(i)) - log_sum_exp_except(alpha, None)
    }
}

fn log_sum_exp_except(alpha: &[f64], skip: Option<usize>) -> f64 {
    let keep = |j: &usize| Some(*j) != skip;
    let max = (0..alpha.len()).filter(keep).map(|j| alpha[j]).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + (0..alpha.len()).filter(keep).map(|j| (alpha[j] - max).exp()).sum::<f64>().ln()
}

/// Softmax of `alpha` with element `skip` removed (its entry is zero).
fn softmax_except(alpha: &[f64], skip: usize) -> Vec<f64> {
    let lse = log_sum_exp_except(alpha, Some(skip));
    (0..alpha.len()).map(|j| if j == skip { 0.0 } else { (alpha[j] - lse).exp() }).collect()
}

/// Gradient of a loss with respect to the logits, given its gradient with
/// respect to the soft mask.
pub fn soft_sample_backward(tape: &SoftSampleTape, mask_grad: &[f64]) -> Result<Vec<f64>> {
    let n = tape.raw.len();
    if mask_grad.len() != n {
        bail!(Usage, "mask gradient has length {}, expected {n}", mask_grad.len());
    }
    // The clamp passes gradient only where the raw sum stayed inside [0, 1].
    let g_raw: Vec<f64> = tape
        .raw
        .iter()
        .zip(mask_grad)
        .map(|(&v, &g)| if v <= 1.0 { g } else { 0.0 })
        .collect();
    // Gradient with respect to the unscaled scores after the current draw.
    let mut g_next = vec![0.0; n];
    for (alpha, y) in tape.alphas.iter().zip(&tape.draws).rev() {
        // Through y = softmax(alpha).
        let dot: f64 = g_raw.iter().zip(y).map(|(a, b)| a * b).sum();
        let mut g_alpha: Vec<f64> = (0..n).map(|k| y[k] * (g_raw[k] - dot)).collect();
        // Through ln(1 - y_i) = LSE_{j != i}(alpha) - LSE(alpha).
        let total: f64 = g_next.iter().sum();
        let mut spread = 0.0;
        let mut dominant = None;
        for i in 0..n {
            if y[i] <= 0.5 {
                spread += g_next[i] / (1.0 - y[i]);
            } else {
                dominant = Some(i);
            }
        }
        for k in 0..n {
            let own = if y[k] <= 0.5 { g_next[k] / (1.0 - y[k]) } else { 0.0 };
            g_alpha[k] += y[k] * (spread - own) - y[k] * total;
        }
        if let Some(d) = dominant {
            for (g, s) in g_alpha.iter_mut().zip(softmax_except(alpha, d)) {
                *g += g_next[d] * s;
            }
        }
        for (g, ga) in g_next.iter_mut().zip(g_alpha) {
            *g += ga / tape.temperature;
        }
    }
    Ok(g_next)
}

fn softmax(alpha: &[f64]) -> Vec<f64> {
    let max = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = alpha.iter().map(|a| (a - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Indicator of the `r` largest logits; ties go to the lower index.
pub fn harden(logits: &SelectionLogits, r: usize) -> Result<SelectionPattern> {
    check_budget(logits.len(), r)?;
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits.logits[b].total_cmp(&logits.logits[a]).then(a.cmp(&b)));
    order.truncate(r);
    SelectionPattern::from_indices(logits.len(), &order)
}

/// Which matrix axis a pattern selects along.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Antenna,
    Subcarrier,
}

/// Keeps the rows (antenna axis) or columns (subcarrier axis) selected by
/// `pattern`, in their original order.
pub fn apply_mask(values: &CMatrix, pattern: &SelectionPattern, axis: Axis) -> Result<CMatrix> {
    let idx = pattern.indices();
    match axis {
        Axis::Antenna => {
            if pattern.len() != values.rows() {
                bail!(Usage, "pattern length {} does not match {} antennas", pattern.len(), values.rows());
            }
            let mut out = CMatrix::zeros(idx.len(), values.cols());
            for (o, &i) in idx.iter().enumerate() {
                out.row_mut(o).copy_from_slice(values.row(i));
            }
            Ok(out)
        }
        Axis::Subcarrier => {
            if pattern.len() != values.cols() {
                bail!(Usage, "pattern length {} does not match {} subcarriers", pattern.len(), values.cols());
            }
            Ok(CMatrix::from_fn(values.rows(), idx.len(), |i, j| values[(i, idx[j])]))
        }
    }
}

/// Inverse of [`apply_mask`]: scatters a reduced observation back into a
/// full-size matrix with zeros at unselected positions.
pub fn zero_pad(reduced: &CMatrix, pattern: &SelectionPattern, axis: Axis) -> Result<CMatrix> {
    let idx = pattern.indices();
    match axis {
        Axis::Antenna => {
            if reduced.rows() != idx.len() {
                bail!(Usage, "observation has {} rows, pattern selects {}", reduced.rows(), idx.len());
            }
            let mut out = CMatrix::zeros(pattern.len(), reduced.cols());
            for (o, &i) in idx.iter().enumerate() {
                out.row_mut(i).copy_from_slice(reduced.row(o));
            }
            Ok(out)
        }
        Axis::Subcarrier => {
            if reduced.cols() != idx.len() {
                bail!(Usage, "observation has {} columns, pattern selects {}", reduced.cols(), idx.len());
            }
            let mut out = CMatrix::zeros(reduced.rows(), pattern.len());
            for i in 0..reduced.rows() {
                for (o, &j) in idx.iter().enumerate() {
                    out[(i, j)] = reduced[(i, o)];
                }
            }
            Ok(out)
        }
    }
}

/// Geometric temperature decay from `start` to `end` over `steps` steps.
pub fn temperature_schedule(start: f64, end: f64, steps: usize, step: usize) -> f64 {
    if steps <= 1 {
        return end;
    }
    let frac = step.min(steps - 1) as f64 / (steps - 1) as f64;
    start * (end / start).powf(frac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform_pattern(8, 2).unwrap().indices(), vec![0, 4]);
        assert!(uniform_pattern(5, 5).unwrap().mask().iter().all(|&b| b));
        let p = uniform_pattern(1024, 256).unwrap();
        assert_eq!(p.indices(), (0..256).map(|k| 4 * k).collect::<Vec<_>>());
        assert!(matches!(uniform_pattern(4, 5), Err(crate::Error::Usage(_))));
    }

    #[test]
    fn random_examples() {
        assert!(random_pattern(6, 6, 3).unwrap().mask().iter().all(|&b| b));
        assert_eq!(random_pattern(64, 8, 1).unwrap(), random_pattern(64, 8, 1).unwrap());
        for seed in 0..100 {
            assert_eq!(random_pattern(64, 8, seed).unwrap().budget(), 8);
        }
        assert!(random_pattern(3, 4, 0).is_err());
    }

    #[test]
    fn harden_examples() {
        let l = SelectionLogits::new(vec![3.0, 1.0, 2.0], 1.0).unwrap();
        assert_eq!(harden(&l, 1).unwrap().mask(), &[true, false, false]);
        let flat = SelectionLogits::new(vec![0.5; 4], 1.0).unwrap();
        assert_eq!(harden(&flat, 2).unwrap().mask(), &[true, true, false, false]);
        let scaled = SelectionLogits::new(vec![6.0, 2.0, 4.0], 1.0).unwrap();
        assert_eq!(harden(&scaled, 2).unwrap(), harden(&SelectionLogits::new(vec![3.0, 1.0, 2.0], 1.0).unwrap(), 2).unwrap());
    }

    #[test]
    fn soft_sample_cold_limit_is_top_r() {
        // Margins far above the Gumbel noise scale.
        let logits: Vec<f64> = (0..10).map(|i| 100.0 * ((i * 7) % 10) as f64).collect();
        let l = SelectionLogits::new(logits, 1e-3).unwrap();
        let (mask, _) = soft_sample(&l, 3, 4).unwrap();
        let hard = harden(&l, 3).unwrap();
        for (m, &h) in mask.iter().zip(hard.mask()) {
            assert!((m - if h { 1.0 } else { 0.0 }).abs() < 1e-6, "{mask:?}");
        }
    }

    #[test]
    fn soft_sample_equal_logits_reproducible() {
        let l = SelectionLogits::new(vec![0.0; 12], 0.5).unwrap();
        let (a, _) = soft_sample(&l, 4, 17).unwrap();
        let (b, _) = soft_sample(&l, 4, 17).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().sum::<f64>() <= 4.0 + 1e-12);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn soft_sample_gradient_matches_finite_differences() {
        let base: Vec<f64> = (0..8).map(|i| 0.3 * i as f64 - 1.0).collect();
        let weights: Vec<f64> = (0..8).map(|i| 1.0 + 0.25 * i as f64).collect();
        let objective = |logits: &[f64]| -> f64 {
            let l = SelectionLogits::new(logits.to_vec(), 0.7).unwrap();
            let (m, _) = soft_sample(&l, 3, 5).unwrap();
            m.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let l = SelectionLogits::new(base.clone(), 0.7).unwrap();
        let (_, tape) = soft_sample(&l, 3, 5).unwrap();
        let grad = soft_sample_backward(&tape, &weights).unwrap();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-8);
            assert!((fd - grad[i]).abs() / denom < 1e-4 || (fd - grad[i]).abs() < 1e-9, "coord {i}: fd {fd} analytic {}", grad[i]);
        }
    }

    #[test]
    fn mask_apply_examples() {
        let grid = CMatrix::from_fn(4, 64, |i, j| Complex64::new(i as f64, j as f64));
        let all = uniform_pattern(4, 4).unwrap();
        assert_eq!(apply_mask(&grid, &all, Axis::Antenna).unwrap(), grid);
        let first = SelectionPattern::from_indices(4, &[0]).unwrap();
        let row = apply_mask(&grid, &first, Axis::Antenna).unwrap();
        assert_eq!(row.shape(), (1, 64));
        assert_eq!(row.row(0), grid.row(0));
        assert!(apply_mask(&grid, &first, Axis::Subcarrier).is_err());
    }

    #[test]
    fn mask_pad_mask_is_idempotent() {
        let grid = CMatrix::from_fn(6, 10, |i, j| Complex64::new((i * 10 + j) as f64, -(j as f64)));
        for (axis, pattern) in [
            (Axis::Antenna, random_pattern(6, 3, 2).unwrap()),
            (Axis::Subcarrier, uniform_pattern(10, 4).unwrap()),
        ] {
            let once = apply_mask(&grid, &pattern, axis).unwrap();
            let padded = zero_pad(&once, &pattern, axis).unwrap();
            assert_eq!(apply_mask(&padded, &pattern, axis).unwrap(), once);
        }
    }

    #[test]
    fn schedule_endpoints() {
        assert!((temperature_schedule(1.0, 0.05, 10, 0) - 1.0).abs() < 1e-12);
        assert!((temperature_schedule(1.0, 0.05, 10, 9) - 0.05).abs() < 1e-12);
    }
}
