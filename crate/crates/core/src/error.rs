use thiserror::Error;

/// Errors surfaced by the numerical and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error(
        "eigensolver did not converge after {sweeps} sweeps \
         (off-diagonal residual {residual:.3e}, tolerance {tolerance:.3e})"
    )]
    NoConvergence {
        sweeps: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("frame columns are not orthonormal (Gram residual {residual:.3e})")]
    NonOrthonormalFrame { residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("zero spectral gap: {0}")]
    ZeroGap(String),

    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
