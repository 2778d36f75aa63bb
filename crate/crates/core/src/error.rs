use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An objective or intermediate quantity produced NaN or infinity.
    #[error("non-finite value {value} encountered ({context})")]
    NumericalFailure {
        context: &'static str,
        value: f64,
        point: Vec<f64>,
    },

    #[error("search direction is not a descent direction (slope {slope})")]
    NotDescentDirection { slope: f64 },

    #[error("gradient is exactly zero; point is already stationary")]
    AlreadyStationary,

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}
