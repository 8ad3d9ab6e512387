//! Command-line harness: configuration, persistence and the subcommands
//! behind the `skillrank` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod simulate;

pub use commands::{cmd_build_pairs, cmd_correlate, cmd_monitor, cmd_rate, cmd_score, Outcome};
pub use config::RunConfig;
pub use error::CliError;
pub use simulate::cmd_simulate;
