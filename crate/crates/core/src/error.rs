use thiserror::Error;

use crate::config::ConfigError;

/// Errors raised by the numerical and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("landmarks {0} and {1} coincide")]
    DuplicateLandmark(usize, usize),

    #[error("kernel matrix is indefinite: eigenvalue {0:e} below tolerance")]
    Indefinite(f64),

    #[error("degenerate function draw: zero RKHS norm after resampling")]
    DegenerateDraw,

    #[error("Cholesky bordering broke down: diagonal argument {0:e}")]
    Breakdown(f64),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("brute-force instance too large: {0} selections")]
    InstanceTooLarge(f64),

    #[error("ellipsoid check requires the linear kernel")]
    NonLinearKernel,

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
