// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line driver for mdprobe: synthetic data generation, training,
//! lambda search, evaluation and the end-to-end pipeline.
//!
//! Every command writes into a directory under the output root whose name is
//! a digest of the effective invocation, so reruns land in the same place.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod reference;

use std::ffi::OsString;

use clap::Parser;
use mdprobe::{ErrorKind, ProbeError};

pub use args::Cli;

/// Environment variable holding the default output root.
pub const OUT_ENV: &str = "MDPROBE_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_DIVERGENCE: i32 = 5;

/// Maps an error chain to a process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ProbeError>() {
            return match e.kind() {
                ErrorKind::Validation => EXIT_VALIDATION,
                ErrorKind::Io => EXIT_IO,
                ErrorKind::Divergence => EXIT_DIVERGENCE,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_OTHER
}

/// Parses `argv`, runs the command and returns the exit code. Errors are
/// reported on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code(&err)
        }
    }
}

/// Runs a parsed command inside a pool capped at `--jobs` workers.
pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()?;
    pool.install(|| commands::dispatch(cli))
}
