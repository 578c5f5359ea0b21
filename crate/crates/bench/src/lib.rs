//! Experiment drivers for comparing diagonal preconditioners: condition
//! number histograms on random networks, autoencoder training benchmarks
//! and cosine-distance traces between estimated diagonals.

pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod idx;
pub mod metrics;

pub use error::{BenchError, Result};
