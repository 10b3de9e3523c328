//! Configuration, persistence and experiment commands for the `enspod` binary.

pub mod config;
pub mod error;
pub mod experiment;
pub mod io;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
