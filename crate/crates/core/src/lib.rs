//! Benchmarking and hyperparameter tuning for tabular data synthesizers.

pub mod bridge;
pub mod cli;
pub mod config;
pub mod cost;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod generators;
pub mod learner;
pub mod matrix;
pub mod report;
pub mod metrics;
pub mod rng;
pub mod toy;
pub mod tuner;

pub use error::{Error, Result};
