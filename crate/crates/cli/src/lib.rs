//! Experiment front end: configuration, built-in fixtures and the command
//! implementations behind the `mime` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod output;
pub mod profiles;

pub use cli::{run, Cli};
pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};
