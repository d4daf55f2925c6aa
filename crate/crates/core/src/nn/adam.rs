use alloc::vec::Vec;

// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{bail, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| alloc::vec![0.0; t.len()]).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut ParamStore, grads: &ParamStore, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len()
        || state.m.len() != params.len()
        || params.tensors().iter().zip(grads.tensors()).zip(&state.m).any(|((p, g), m)| {
            p.shape() != g.shape() || m.len() != p.len()
        })
    {
        bail!(Usage, "gradient or optimizer state does not match the parameters");
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for (((p, g), m), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads.tensors())
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for (((pv, gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, NetworkSpec, Tensor};
    use alloc::vec;

    fn scalar_store(value: f64) -> (ParamStore, NetworkSpec) {
        let spec = NetworkSpec::new(vec![1], vec![LayerSpec::dense(1, 1)]);
        let mut p = ParamStore::init(&spec, 0).unwrap();
        p.tensors_mut()[0].data_mut()[0] = value;
        p.tensors_mut()[1].data_mut()[0] = 0.0;
        (p, spec)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, _) = scalar_store(0.7);
        let before = p.clone();
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &before.zeros_like(), &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(p.tensors(), before.tensors());
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        let (mut p, _) = scalar_store(0.7);
        let mut g = p.zeros_like();
        g.tensors_mut()[0] = Tensor::new(vec![1, 1], vec![2.5]).unwrap();
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &g, &mut state, &cfg).unwrap();
        // m_hat = g, v_hat = g², step = lr · g / (|g| + eps).
        let expected = 0.7 - 0.01 * 2.5 / (2.5 + 1e-8);
        assert!((p.tensors()[0].data()[0] - expected).abs() < 1e-15);
        assert!(p.tensors()[0].data()[0] < 0.7);
    }

    #[test]
    fn identical_runs_identical_params() {
        let run = || {
            let (mut p, _) = scalar_store(0.1);
            let mut g = p.zeros_like();
            g.tensors_mut()[0].data_mut()[0] = -0.3;
            g.tensors_mut()[1].data_mut()[0] = 0.2;
            let mut state = AdamState::new(&p);
            for _ in 0..5 {
                adam_step(&mut p, &g, &mut state, &AdamConfig::default()).unwrap();
            }
            p
        };
        assert_eq!(run().tensors(), run().tensors());
    }
}
