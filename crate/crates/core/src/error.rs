//! Crate-wide error type.

use std::fmt;

/// Errors surfaced by the solver library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operands live on different tapes, or a leaf is foreign to the tape.
    TapeMismatch,
    /// Division by zero while recording a tape operation.
    DivisionByZero,
    /// Vector/point dimensions disagree.
    DimensionMismatch { expected: usize, got: usize },
    /// A residual or loss evaluated to NaN/inf; carries the offending point.
    NonFinite { context: String, point: Vec<f64> },
    /// Evaluation point too close to an angular pole (sin theta ~ 0).
    SingularPoint { sin_theta: f64 },
    /// Point is not on the inflow boundary of the case.
    NotInflowBoundary { point: Vec<f64> },
    /// Contract violation in how an operation was called.
    Usage(String),
    /// Invalid or inconsistent configuration.
    Config(String),
    /// Optimizer aborted (line-search failure, non-finite loss mid-run).
    TrainingAborted(String),
    /// Theorem assumption violated (coercivity margin l <= 0).
    AssumptionViolated(String),
    /// Filesystem / serialization problems in snapshot and report I/O.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::TapeMismatch => write!(f, "operands belong to different tapes"),
            Error::DivisionByZero => write!(f, "division by zero"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::NonFinite { context, point } => {
                write!(f, "non-finite value in {context} at point {point:?}")
            }
            Error::SingularPoint { sin_theta } => {
                write!(
                    f,
                    "angular pole: |sin theta| = {sin_theta:e} below threshold"
                )
            }
            Error::NotInflowBoundary { point } => {
                write!(f, "point {point:?} is not on the inflow boundary")
            }
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::TrainingAborted(msg) => write!(f, "training aborted: {msg}"),
            Error::AssumptionViolated(msg) => write!(f, "assumption violated: {msg}"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
