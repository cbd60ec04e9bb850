use thiserror::Error;

/// Errors surfaced by the library. Harness-level wrappers tag the failing
/// stage so CLI output can name it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} exceeds tolerance {tol:.3e})")]
    NotSymmetric { asymmetry: f64, tol: f64 },

    #[error("eigensolver failed to converge after {iters} iterations")]
    EigNoConvergence { iters: usize },

    #[error("matrix is numerically singular (pivot {pivot:.3e})")]
    Singular { pivot: f64 },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
