use thiserror::Error;

use crate::population::GroupKey;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad parameters, inconsistent data, unknown groups.
    #[error("validation error: {0}")]
    Validation(String),

    /// The operation only supports one score dimensionality.
    #[error("population has dimension {found}; {hint}")]
    Dimension { found: usize, hint: &'static str },

    /// An entropic solver ran out of iterations.
    #[error(
        "sinkhorn did not converge for group {group} after {iterations} iterations \
         (marginal error {marginal_error:.3e} > tol {tol:.1e})"
    )]
    NotConverged {
        group: GroupKey,
        iterations: usize,
        marginal_error: f64,
        tol: f64,
    },

    /// Input exceeds the size guard of a brute-force oracle.
    #[error("refused: {0}")]
    Refused(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
