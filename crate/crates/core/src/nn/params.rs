use alloc::string::String;
use alloc::vec::Vec;

// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NetworkSpec, Tensor};
use crate::error::{bail, Result};
use crate::rng;

/// Named parameter tensors in spec traversal order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub init_seed: u64,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    /// Bumped on every in-place update; tapes remember the value they saw.
    #[serde(skip)]
    generation: u64,
}

impl ParamStore {
    /// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for weights and biases alike. Each tensor draws from its own stream
    /// keyed by its name.
    pub fn init(spec: &NetworkSpec, init_seed: u64) -> Result<Self> {
        spec.shapes()?;
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let shapes = spec.param_shapes();
        for (idx, (name, shape)) in shapes.iter().enumerate() {
            // A bias shares its fan-in with the weight right before it.
            let weight_shape = if name.ends_with(".bias") { &shapes[idx - 1].1 } else { shape };
            let fan_in: usize = weight_shape[1..].iter().product();
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            let mut rng = rng::stream(init_seed, name);
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
            names.push(name.clone());
            tensors.push(Tensor::new(shape.clone(), data)?);
        }
        Ok(Self { init_seed, names, tensors, generation: 0 })
    }

    /// Store with the same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            init_seed: self.init_seed,
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            generation: 0,
        }
    }

    /// Rebuilds a store from `(name, tensor)` pairs, e.g. a checkpoint.
    pub fn from_named(init_seed: u64, entries: Vec<(String, Tensor)>) -> Result<Self> {
        let mut names = Vec::with_capacity(entries.len());
        let mut tensors = Vec::with_capacity(entries.len());
        for (name, t) in entries {
            if names.contains(&name) {
                bail!(Usage, "duplicate parameter name {name}");
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { init_seed, names, tensors, generation: 0 })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub(crate) fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    /// Mutable access to every tensor; counts as an update.
    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        self.generation += 1;
        &mut self.tensors
    }

    /// True when `spec` would produce exactly these names and shapes.
    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        let shapes = spec.param_shapes();
        shapes.len() == self.names.len()
            && shapes
                .iter()
                .zip(self.names.iter().zip(&self.tensors))
                .all(|((n, s), (name, t))| n == name && s.as_slice() == t.shape())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &ParamStore) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.scale_assign(s);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sum_sq).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use alloc::vec;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = NetworkSpec::new(vec![16], vec![LayerSpec::dense(16, 4), LayerSpec::Relu, LayerSpec::dense(4, 2)]);
        let a = ParamStore::init(&spec, 3).unwrap();
        assert_eq!(a, ParamStore::init(&spec, 3).unwrap());
        assert_ne!(a, ParamStore::init(&spec, 4).unwrap());
        assert_eq!(a.names(), &["0.weight", "0.bias", "2.weight", "2.bias"]);
        assert!(a.tensors()[0].data().iter().all(|v| v.abs() <= 0.25));
        assert!(a.tensors()[3].data().iter().all(|v| v.abs() <= 0.5));
        assert!(a.matches(&spec));
    }
}
