use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 2.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Numerical or I/O failure while running; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Invalid(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl From<ridge_transfer::Error> for CliError {
    fn from(e: ridge_transfer::Error) -> Self {
        use ridge_transfer::Error as E;
        match e {
            E::InvalidParameter { .. }
            | E::DimensionMismatch { .. }
            | E::NonFinite(_)
            | E::NotSymmetric(_)
            | E::NotPositiveSemidefinite(_) => CliError::Invalid(e.to_string()),
            E::NonPositiveAlignment(_) | E::Factorization(_) | E::NoConvergence { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}
