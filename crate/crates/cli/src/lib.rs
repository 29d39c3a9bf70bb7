//! Experiment driver behind the `kedge` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use config::ExperimentConfig;
pub use error::{exit, CliError, CliResult};
