use thiserror::Error;

pub type Result<T, E = ScoraError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ScoraError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("{what} index {index} out of range (expected < {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The optimizer ran out of iterations. Carries the best iterate seen.
    #[error("solver did not converge after {iterations} iterations (gradient inf-norm {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
        best: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ScoraError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        ScoraError::Input(msg.into())
    }
}
