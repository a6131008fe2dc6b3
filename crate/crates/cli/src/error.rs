//! Error categories and their process exit codes.

use benchcert_core::CoreError;
use thiserror::Error;

/// Errors raised by the command layer itself.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flag combinations that clap cannot express.
    #[error("{0}")]
    Usage(String),
    /// Inputs that fail to parse or validate.
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    CliError::Usage(msg.into()).into()
}

pub fn data(msg: impl Into<String>) -> anyhow::Error {
    CliError::Data(msg.into()).into()
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Maps an error chain to an exit code: usage 1, data validation 2,
/// numerical or internal failure 3.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Data(_) => EXIT_DATA,
                CliError::Numerical(_) => EXIT_NUMERICAL,
            };
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Validation(_) | CoreError::UnsupportedRule(_) | CoreError::NoWitness { .. } => {
                    EXIT_DATA
                }
                CoreError::Numerical(_) | CoreError::Internal(_) => EXIT_NUMERICAL,
            };
        }
        if cause.downcast_ref::<csv::Error>().is_some() || cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_DATA;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return EXIT_DATA;
        }
    }
    EXIT_NUMERICAL
}
