use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("data validation failed:\n{0}")]
    Validation(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}, divergence {divergence:.3e})")]
    SolverDiverged {
        iterations: usize,
        residual: f64,
        divergence: f64,
    },

    #[error("time step {dt:.6e} exceeds the stable bound {bound:.6e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("numeric fault in cell ({i},{j}): {what}")]
    NumericFault { what: String, i: usize, j: usize },

    #[error("riemann oracle: {0}")]
    Oracle(String),

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
