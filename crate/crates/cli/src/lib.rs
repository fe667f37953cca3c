//! Experiment harness for the reentrant scheduling model: configuration,
//! CSV output, the experiment subcommands and the verification suites.

pub mod commands;
pub mod config;
pub mod error;
pub mod suites;
pub mod table;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
