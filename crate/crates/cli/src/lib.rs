//! Library side of the `tdpa` command-line tool: configuration, ND-JSON
//! stream formats and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;

pub use config::{EngineConfig, Mode};
pub use error::CliError;
