use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (non-finite coordinates, ragged rows, asymmetric matrices).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A scalar or shape parameter is out of its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Invalid manifold specification.
    #[error("invalid manifold spec: {0}")]
    InvalidSpec(String),

    /// A normalizer vanished, so a row cannot be rescaled.
    #[error("degenerate {stage} at index {index}")]
    DegenerateRow { stage: &'static str, index: usize },

    #[error("balancing did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("spectral error: {0}")]
    Spectral(String),

    /// Every reference distance is below the admission tolerance.
    #[error("reference distances are all below {zero_tol:e}")]
    DegenerateReference { zero_tol: f64 },

    #[error("trial {trial} failed")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_) => ErrorClass::Io,
            Error::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(_) => ErrorClass::Io,
                _ => ErrorClass::Validation,
            },
            Error::InvalidInput(_)
            | Error::InvalidParameter(_)
            | Error::InvalidSpec(_)
            | Error::Format(_) => ErrorClass::Validation,
            Error::DegenerateRow { .. }
            | Error::ConvergenceFailure { .. }
            | Error::Spectral(_)
            | Error::DegenerateReference { .. } => ErrorClass::Numerical,
            Error::Trial { source, .. } => source.class(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
