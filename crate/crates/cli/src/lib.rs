//! Configuration parsing, data ingestion, output writing and the
//! subcommands of the `subshrink` binary.

pub mod commands;
pub mod config;
pub mod energy;
pub mod error;
pub mod output;

pub use error::{CliError, CliResult};
