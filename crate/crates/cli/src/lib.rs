//! The `tdtlab` command: corpus preparation, synthetic data, training,
//! decoding, scoring and self-verification.

use std::ffi::OsString;

use clap::Parser;

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{Cli, Command, DecodedSegment};
pub use config::{RunConfig, BUNDLED_CONFIG};
pub use error::{CliError, ExitCode};

/// Caps the worker threads used for per-sample parallelism.
pub const THREADS_ENV: &str = "TDTLAB_THREADS";

/// Runs one invocation and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::Usage as i32 } else { ExitCode::Success as i32 };
        }
    };
    match commands::execute(cli.command) {
        Ok(()) => ExitCode::Success as i32,
        Err(e) => {
            eprintln!("error: {e}");
            e.code as i32
        }
    }
}
