//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch for record '{id}': expected {expected}, got {got}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        got: usize,
    },

    #[error("covariance of record '{id}' is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { id: String, min_eig: f64 },

    #[error("matrix is not symmetric (relative asymmetry {asym:.3e})")]
    NotSymmetric { asym: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("singular covariance for record '{id}' even after jitter")]
    SingularCovariance { id: String },

    #[error("optimizer did not converge after {iters} iterations (gradient max-norm {grad_norm:.3e})")]
    NonConvergence { iters: usize, grad_norm: f64 },

    #[error("no positively-correlated proxy: every entry of the returns vector is nonpositive")]
    NoPositiveReturn,

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code per the CLI contract: 1 for validation errors,
    /// 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_)
            | Error::Parse { .. }
            | Error::DimensionMismatch { .. }
            | Error::NotPsd { .. }
            | Error::NotSymmetric { .. }
            | Error::Invalid(_) => 1,
            Error::SingularCovariance { .. }
            | Error::NonConvergence { .. }
            | Error::NoPositiveReturn => 2,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
