use thiserror::Error;

/// Errors produced by graph construction, scenario loading, and simulation runs.
///
/// The variants map onto the CLI exit codes: configuration / validation
/// problems exit with 2, failed run assertions with 1, and numeric blowups
/// with 3.
#[derive(Debug, Error)]
pub enum SimError {
    /// Invalid parameter or scenario field.
    #[error("configuration error: {0}")]
    Config(String),

    /// A structurally malformed input (e.g. a partition that is not a
    /// partition), as opposed to a well-formed input that fails validation.
    #[error("structural error: {0}")]
    Structural(String),

    /// A precondition audit (RDAG, F-local, in-degree) rejected the scenario.
    #[error("audit failure: {0}")]
    Audit(String),

    /// A run-time assertion over a trace failed.
    #[error("assertion failure: {0}")]
    Assertion(String),

    /// NaN/Inf or other numeric breakdown during integration.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Process exit code associated with this error kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Assertion(_) => 1,
            SimError::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
