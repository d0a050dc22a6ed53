//! Crate-wide error type.
//!
//! Estimation errors split into two exit-code classes at the CLI boundary:
//! [`Error::TailDivergence`] maps to exit code 3 (the fitted tail makes the
//! requested quantity undefined), everything else maps to exit code 2
//! (validation / configuration / input problems).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,

    #[error("non-finite value at index {0}")]
    NonFiniteValue(usize),

    #[error("negative value at index {0}")]
    NegativeValue(usize),

    #[error("need at least 4 observations, got {0}")]
    TooFewObservations(usize),

    #[error("rank {rank} outside [1, {max}]")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("probability {0} outside the admissible range")]
    ProbabilityOutOfRange(f64),

    #[error("argument out of range: {0}")]
    ArgumentOutOfRange(String),

    #[error("tail integral diverges: {0}")]
    TailDivergence(String),

    #[error("tail mass k/n = {u} reaches the CTE threshold region 1 - t = {avail}")]
    ThresholdConflict { u: f64, avail: f64 },

    #[error("transformed threshold H(X_(n-k:n)) = {0} is not positive, log-excesses undefined")]
    ZeroThreshold(f64),

    #[error("division by zero in coupling evaluation at ({x}, {y})")]
    DivisionByZero { x: f64, y: f64 },

    #[error("both normalization constants are zero")]
    BothZero,

    #[error("bias term undefined: b = {0} with omega = 0")]
    UndefinedBias(f64),

    #[error("variance machinery unavailable: {0}")]
    VarianceUnavailable(String),

    #[error("asymptotic variance undefined: {0}")]
    VarianceUndefined(String),

    #[error("bridge discretization too coarse: {0}")]
    GridTooCoarse(String),

    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code class for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::TailDivergence(_) => 3,
            _ => 2,
        }
    }
}
