use thiserror::Error;

/// Failures raised by the geometry, engine, estimator and bootstrap layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate {value} at index {index} lies outside the unit interval")]
    OutOfUnitCube { index: usize, value: f64 },

    /// A point is both failure- and safety-dominated: the supplied function is not monotone.
    #[error("separability violated: {0}")]
    SeparabilityViolation(String),

    #[error("initialization left trivial bounds after {steps} steps (lower={lower}, upper={upper})")]
    InitFailed { steps: usize, lower: f64, upper: f64 },

    #[error("rejection sampler exhausted {0} consecutive draws")]
    RejectionBudgetExceeded(usize),

    #[error("all signatures are equal; the likelihood has no interior maximum")]
    DegenerateSignatures,

    #[error("probability {p} outside the open bracket ({lower}, {upper})")]
    OutsideBracket { p: f64, lower: f64, upper: f64 },

    #[error("degenerate bracket: lower = upper = {0}")]
    DegenerateBracket(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
