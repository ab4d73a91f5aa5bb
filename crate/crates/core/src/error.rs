use thiserror::Error;

/// Errors produced by the analytical model, optimizer and simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// No device in the mixture can ever transmit, so busy-slot quantities
    /// are undefined.
    #[error("degenerate contention mixture: no device can transmit")]
    DegenerateMixture,

    /// P(success | busy) is zero, so the expected number of collisions diverges.
    #[error("expected collision count diverges (success probability is zero)")]
    DivergentExpectation,

    #[error("infeasible winner count {requested}: only {available} active devices")]
    InfeasibleWinners { requested: u64, available: f64 },

    #[error("plan mismatch: {0}")]
    PlanMismatch(String),

    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),

    #[error("inconsistent trace: {0}")]
    InconsistentTrace(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
