use thiserror::Error;

/// Errors raised by the numerical kernels, the functionals and the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpinError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("zero divisor at entry ({0}, {1})")]
    ZeroDivisor(usize, usize),

    #[error("multiplier infeasible: smallest eigenvalue of the first level is {min_eig:.3e}")]
    InfeasibleMultiplier { min_eig: f64 },

    #[error("path infeasible: {reason}")]
    InfeasiblePath { reason: String },

    #[error("increment {0} is not positive definite")]
    DegenerateIncrement(usize),

    #[error("weights are not strictly increasing at level {0}")]
    NonStrictWeights(usize),

    #[error("finite-difference probe left the domain")]
    InfeasibleStep,

    #[error("levels {0} and {1} share a trace but differ")]
    DegenerateTrace(usize, usize),

    #[error("no feasible starting point")]
    NoFeasibleStart,

    #[error("stage {stage} (eps = {eps:e}): {source}")]
    AtStage { stage: usize, eps: f64, source: Box<SpinError> },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, SpinError>;
