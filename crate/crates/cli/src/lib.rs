//! File formats and the `calibra` command line.
//!
//! Scores are CSV, models, reports and synthetic ground truth are versioned
//! JSON. Every write is atomic. Exit codes: 0 success, 2 input or parse
//! error, 3 numerical or fit failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod atomic;
pub mod commands;
pub mod error;
pub mod model_file;
pub mod report_file;
pub mod scores;
pub mod truth_file;

pub use error::{CliError, CliResult};

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = args::Cli::try_parse_from(args).map_err(|e| CliError::Input(e.to_string()))?;
    commands::dispatch(cli.command)
}
