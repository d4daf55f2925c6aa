//! A small reverse-mode network engine.
//!
//! Networks are static layer lists ([`NetworkSpec`]) evaluated one sample at
//! a time. [`forward`] records a [`Tape`] of the activations each layer
//! needs; [`backward`] replays it in reverse to produce parameter and input
//! gradients. The layer set is deliberately small: dense, 2D convolution
//! with rectangular kernels, ReLU, an explicit-Euler ODE block and a
//! two-branch concatenation.

mod adam;
mod graph;
mod loss;
mod params;
mod spec;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{backward, backward_into, forward, Backward, Tape};
pub use loss::{cross_entropy_loss, nmse_loss};
pub use params::ParamStore;
pub use spec::{LayerSpec, NetworkSpec};
pub use tensor::Tensor;
