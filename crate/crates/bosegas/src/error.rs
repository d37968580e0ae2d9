use thiserror::Error;

/// Errors produced by model construction, operator assembly and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid model input: {0}")]
    Model(String),

    #[error("mode {0:?} is outside the configured mode set")]
    ModeOutOfSet(Vec<i64>),

    #[error("operator assembly error: {0}")]
    Operator(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("eigensolver did not converge within {iterations} iterations (best residual {best_residual:e}, tol {tol:e})")]
    SolverConvergence {
        iterations: usize,
        best_residual: f64,
        tol: f64,
    },

    #[error("matrix exponential failed: {0}")]
    Expm(String),

    #[error("generator is not anti-Hermitian (defect {defect:e} exceeds {limit:e})")]
    NotAntiHermitian { defect: f64, limit: f64 },

    #[error("truncation tail weight {tail:e} exceeds gate {gate:e}; increase excitation_cutoff")]
    TruncationTail { tail: f64, gate: f64 },

    #[error("power-law fit needs at least 3 strictly positive points, got {0}")]
    FitInput(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
