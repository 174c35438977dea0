//! Experiment harness around the `rbnn` crate: config files, the shared
//! data split, result files and saved models.

pub mod commands;
pub mod config;
pub mod models;
pub mod output;
pub mod pipeline;

pub use crate::commands::{run_compare, run_params, run_predict, run_train, ExperimentOutcome, ModelRun};
pub use crate::config::ExperimentConfig;
