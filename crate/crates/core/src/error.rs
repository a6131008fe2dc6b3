use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    /// Input data or parameters violate an operation's precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// The operation is not defined for the fiber grouping mode in use.
    #[error("unsupported rule: {0}")]
    UnsupportedRule(String),

    /// The deployment probe lies in the benchmark span, so no witness pair exists.
    #[error("no witness: residual norm {residual} is within tolerance; the claim is complete in the ambient space")]
    NoWitness { residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An internal invariant was violated.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CoreError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        CoreError::Validation(msg.into())
    }
}
