use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use benchcert_cli::{execute, exit_code, thread_limit, Cli, Outcome, EXIT_OK, EXIT_USAGE};
use clap::error::ErrorKind;
use clap::Parser;

fn run(cli: &Cli) -> Result<Outcome> {
    if let Some(n) = thread_limit()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    execute(cli)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.stdout.as_bytes());
            ExitCode::from(out.code as u8)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
