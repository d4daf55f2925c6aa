//! Experiment harness for `chanex-core`: config documents, the dataset
//! cache, run registry, metrics files, sweeps and the `chanex` command line.

#![forbid(unsafe_code)]

pub mod aggregate;
pub mod cache;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fsutil;
pub mod grid;
pub mod metrics_io;
pub mod registry;
pub mod scene_io;
pub mod selftest;
pub mod sweep;

pub use error::{Error, Result};
