//! Experiment harness for outcome-transformation uplift models: data
//! generation, end-to-end comparison runs, scoring and evaluation.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{Approach, DataSource, ExperimentConfig, ShiftSetting};
pub use error::{CliError, Result};
pub use pipeline::{run, RunManifest, RunOutput};
