//! Experiment harness for learned context-token selection: configuration,
//! multi-scene runs, baselines, persistence and metrics.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod matrix_io;
pub mod metrics;
pub mod prompts;

pub use error::{Error, Result};
