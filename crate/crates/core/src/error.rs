use thiserror::Error;

/// Errors raised anywhere in the geometry → mesh → flow → adjoint chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular system: zero pivot at row {row}")]
    Singular { row: usize },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("{solver} diverged at iteration {iteration} (residual {residual:.3e})")]
    Divergence {
        solver: &'static str,
        iteration: usize,
        residual: f64,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("nonphysical state at ({i}, {j}): density bracket {bracket:.3e}")]
    Nonphysical { i: usize, j: usize, bracket: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Failures that make a design point unevaluable rather than signalling
    /// a programming or configuration fault.
    pub fn is_evaluation_failure(&self) -> bool {
        matches!(
            self,
            Error::InvalidMesh(_)
                | Error::NonConvergence { .. }
                | Error::Divergence { .. }
                | Error::Nonphysical { .. }
                | Error::Singular { .. }
                | Error::Evaluation(_)
                | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
