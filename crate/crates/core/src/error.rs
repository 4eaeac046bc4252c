use thiserror::Error;

/// Errors produced by the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum ReconError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("analytic gradient unsupported for this kernel: {0}")]
    UnsupportedGradient(String),

    #[error("singular system: {0}; try a larger lambda")]
    SingularSystem(String),

    #[error("iterative solver failed to converge: relative residual {residual:.3e} after {iters} iterations")]
    IterativeFailure { residual: f64, iters: usize },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("no zero crossing in sampled field (min {min:.3e}, max {max:.3e})")]
    EmptySurface { min: f64, max: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ReconError>;
