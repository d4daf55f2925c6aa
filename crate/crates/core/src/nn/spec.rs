use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

/// One layer of a [`NetworkSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    /// Fully connected; the input is flattened first.
    Dense { input: usize, output: usize },
    /// Stride-1 convolution over a `[channels, height, width]` input.
    Conv2d { in_ch: usize, out_ch: usize, kernel: [usize; 2], padding: [usize; 2] },
    Relu,
    /// `steps` explicit Euler steps of `x <- x + step_size * inner(x)`.
    OdeBlock { inner: Box<NetworkSpec>, steps: usize, step_size: f64 },
    /// Splits the flattened input after `branch_a`'s input size, runs each
    /// branch on its part and concatenates the flattened outputs.
    Concat { branch_a: Box<NetworkSpec>, branch_b: Box<NetworkSpec> },
}

impl LayerSpec {
    pub fn dense(input: usize, output: usize) -> Self {
        Self::Dense { input, output }
    }

    pub fn conv(in_ch: usize, out_ch: usize, kernel: [usize; 2], padding: [usize; 2]) -> Self {
        Self::Conv2d { in_ch, out_ch, kernel, padding }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Dense { .. } => "dense",
            Self::Conv2d { .. } => "conv2d",
            Self::Relu => "relu",
            Self::OdeBlock { .. } => "ode_block",
            Self::Concat { .. } => "concat",
        }
    }
}

/// Input shape plus an ordered layer list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Self { input_shape, layers }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Shape after every layer, validated; `shapes[0]` is the input shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        self.shapes_at("")
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().unwrap_or_default())
    }

    fn shapes_at(&self, prefix: &str) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.iter().any(|&d| d == 0) {
            bail!(Config, "network {prefix}input shape {:?} must be non-empty and positive", self.input_shape);
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let current = shapes.last().expect("non-empty");
            let at = format!("{prefix}{i}");
            let err = |msg: String| Error::Config(format!("layer {at} ({}): {msg}", layer.name()));
            let next = match layer {
                LayerSpec::Dense { input, output } => {
                    let n: usize = current.iter().product();
                    if *input != n || *output == 0 {
                        return Err(err(format!("expects {input} inputs, receives {n} from shape {current:?}")));
                    }
                    vec![*output]
                }
                LayerSpec::Conv2d { in_ch, out_ch, kernel, padding } => {
                    let [c, h, w] = current.as_slice() else {
                        return Err(err(format!("needs a [channels, height, width] input, got {current:?}")));
                    };
                    if c != in_ch || *out_ch == 0 {
                        return Err(err(format!("expects {in_ch} channels, receives {c}")));
                    }
                    let oh = (h + 2 * padding[0]).checked_sub(kernel[0]).map(|v| v + 1);
                    let ow = (w + 2 * padding[1]).checked_sub(kernel[1]).map(|v| v + 1);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) if oh > 0 && ow > 0 && kernel[0] > 0 && kernel[1] > 0 => {
                            vec![*out_ch, oh, ow]
                        }
                        _ => return Err(err(format!("kernel {kernel:?} does not fit input {current:?}"))),
                    }
                }
                LayerSpec::Relu => current.clone(),
                LayerSpec::OdeBlock { inner, steps, step_size } => {
                    if *steps == 0 || !(step_size.is_finite() && *step_size > 0.0) {
                        return Err(err(format!("needs positive steps and step size, got {steps}, {step_size}")));
                    }
                    if &inner.input_shape != current {
                        return Err(err(format!("inner input {:?} differs from {current:?}", inner.input_shape)));
                    }
                    let inner_out = inner.shapes_at(&format!("{at}.inner."))?.pop().expect("non-empty");
                    if &inner_out != current {
                        return Err(err(format!("inner maps {current:?} to {inner_out:?}")));
                    }
                    current.clone()
                }
                LayerSpec::Concat { branch_a, branch_b } => {
                    let n: usize = current.iter().product();
                    if branch_a.input_len() + branch_b.input_len() != n {
                        return Err(err(format!(
                            "branch inputs {} + {} do not cover {n} values",
                            branch_a.input_len(),
                            branch_b.input_len()
                        )));
                    }
                    let a = branch_a.shapes_at(&format!("{at}.a."))?.pop().expect("non-empty");
                    let b = branch_b.shapes_at(&format!("{at}.b."))?.pop().expect("non-empty");
                    vec![a.iter().product::<usize>() + b.iter().product::<usize>()]
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// `(name, shape)` of every parameter tensor, in traversal order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.collect_params("", &mut out);
        out
    }

    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Vec<usize>)>) {
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { input, output } => {
                    out.push((format!("{prefix}{i}.weight"), vec![*output, *input]));
                    out.push((format!("{prefix}{i}.bias"), vec![*output]));
                }
                LayerSpec::Conv2d { in_ch, out_ch, kernel, .. } => {
                    out.push((format!("{prefix}{i}.weight"), vec![*out_ch, *in_ch, kernel[0], kernel[1]]));
                    out.push((format!("{prefix}{i}.bias"), vec![*out_ch]));
                }
                LayerSpec::Relu => {}
                LayerSpec::OdeBlock { inner, .. } => inner.collect_params(&format!("{prefix}{i}.inner."), out),
                LayerSpec::Concat { branch_a, branch_b } => {
                    branch_a.collect_params(&format!("{prefix}{i}.a."), out);
                    branch_b.collect_params(&format!("{prefix}{i}.b."), out);
                }
            }
        }
    }

    /// Number of parameter tensors owned by each top-level layer.
    pub(crate) fn tensor_counts(&self) -> Vec<usize> {
        self.layers
            .iter()
            .map(|layer| match layer {
                LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } => 2,
                LayerSpec::Relu => 0,
                LayerSpec::OdeBlock { inner, .. } => inner.tensor_counts().iter().sum(),
                LayerSpec::Concat { branch_a, branch_b } => {
                    branch_a.tensor_counts().iter().sum::<usize>() + branch_b.tensor_counts().iter().sum::<usize>()
                }
            })
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Structural hash used to match tapes and checkpoints to a spec.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325;
        self.hash_into(&mut h);
        h
    }

    fn hash_into(&self, h: &mut u64) {
        fn put(h: &mut u64, v: u64) {
            *h = crate::rng::fnv1a(&v.to_le_bytes(), *h);
        }
        for &d in &self.input_shape {
            put(h, d as u64);
        }
        put(h, u64::MAX);
        for layer in &self.layers {
            match layer {
                LayerSpec::Dense { input, output } => {
                    for v in [1, *input, *output] {
                        put(h, v as u64);
                    }
                }
                LayerSpec::Conv2d { in_ch, out_ch, kernel, padding } => {
                    for v in [2, *in_ch, *out_ch, kernel[0], kernel[1], padding[0], padding[1]] {
                        put(h, v as u64);
                    }
                }
                LayerSpec::Relu => put(h, 3),
                LayerSpec::OdeBlock { inner, steps, step_size } => {
                    put(h, 4);
                    put(h, *steps as u64);
                    put(h, step_size.to_bits());
                    inner.hash_into(h);
                }
                LayerSpec::Concat { branch_a, branch_b } => {
                    put(h, 5);
                    branch_a.hash_into(h);
                    branch_b.hash_into(h);
                }
            }
        }
        put(h, u64::MAX - 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_propagate() {
        let spec = NetworkSpec::new(
            vec![4, 1, 16],
            vec![LayerSpec::conv(4, 8, [1, 3], [0, 1]), LayerSpec::Relu, LayerSpec::dense(128, 10)],
        );
        assert_eq!(spec.output_shape().unwrap(), vec![10]);
        assert_eq!(spec.num_parameters(), 8 * 4 * 3 + 8 + 128 * 10 + 10);
    }

    #[test]
    fn mismatch_names_layer() {
        let spec = NetworkSpec::new(vec![5], vec![LayerSpec::dense(5, 3), LayerSpec::Relu, LayerSpec::dense(4, 2)]);
        match spec.shapes() {
            Err(Error::Config(msg)) => assert!(msg.contains("layer 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ode_inner_must_preserve_shape() {
        let inner = NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, 2)]);
        let spec = NetworkSpec::new(
            vec![3],
            vec![LayerSpec::OdeBlock { inner: Box::new(inner), steps: 2, step_size: 0.5 }],
        );
        assert!(matches!(spec.shapes(), Err(Error::Config(_))));
    }

    #[test]
    fn fingerprint_sees_nested_changes() {
        let mk = |h: f64| {
            NetworkSpec::new(
                vec![3],
                vec![
                    LayerSpec::OdeBlock {
                        inner: Box::new(NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, 3)])),
                        steps: 2,
                        step_size: h,
                    },
                    LayerSpec::dense(3, 1),
                ],
            )
        };
        assert_eq!(mk(0.5).fingerprint(), mk(0.5).fingerprint());
        assert_ne!(mk(0.5).fingerprint(), mk(0.25).fingerprint());
    }
}
