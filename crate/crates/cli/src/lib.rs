//! Command-line front end for benchcert.
//!
//! Every file-producing command writes `report.json` plus CSV tables into
//! `--out`. See the repository README for the report schema and CSV columns.

pub mod args;
pub mod commands;
pub mod error;
pub mod ingest;
pub mod report;

use anyhow::Result;

pub use args::{Cli, Command};
pub use error::{exit_code, CliError, EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};

/// What a successful command prints and the exit code it returns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let stdout = match &cli.command {
        Command::Audit(a) => commands::audit::run(a)?,
        Command::Certify(a) => commands::certify::run(a)?,
        Command::Complete(a) => commands::complete::run(a)?,
        Command::Replay(a) => commands::replay::run(a)?,
        Command::Synth(a) => commands::synth::run(a)?,
        Command::Verify(a) => {
            let v = commands::verify::run(a)?;
            let code = if v.valid { EXIT_OK } else { EXIT_DATA };
            return Ok(Outcome {
                stdout: report::to_json(&v)?,
                code,
            });
        }
    };
    Ok(Outcome { stdout, code: EXIT_OK })
}

/// Reads `BENCHCERT_THREADS` (0 or unset means one thread per core).
pub fn thread_limit() -> Result<Option<usize>> {
    match std::env::var("BENCHCERT_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| error::usage(format!("BENCHCERT_THREADS must be a nonnegative integer, got {v:?}")))?;
            Ok((n > 0).then_some(n))
        }
        _ => Ok(None),
    }
}
