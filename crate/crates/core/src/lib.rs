//! Core algorithms for deep-learning channel extrapolation experiments.
//!
//! Everything here is pure computation over `alloc` collections: a seeded
//! single-bounce multipath scene model, MIMO-OFDM channel synthesis
//! (including cyclic-prefix distortion), subspace selection patterns, a
//! small reverse-mode network engine, and the four extrapolation task
//! pipelines (antenna, in-band frequency, cross-band beam prediction and
//! terminal transfer). File formats, configuration parsing, caching and the
//! command line live in the `chanex` companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod channel;
pub mod error;
pub mod geometry;
pub mod nn;
pub mod rng;
pub mod scene;
pub mod selection;
pub mod serde_db;
pub mod tasks;

pub use error::{Error, Result};
