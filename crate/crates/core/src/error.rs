use thiserror::Error;

/// Errors produced by the library.
///
/// Validation failures (bad configs, violated instance invariants, rejected
/// parameters) are distinguished from runtime failures (diverging iterations,
/// non-finite gradients, I/O) so the CLI can map them to its exit-code
/// contract: 0 success, 1 validation failure, 2 runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input to {context}: {value}")]
    NonFiniteInput { context: &'static str, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("penalty parameter r = {r} rejected: penalized gradients require r >= 1")]
    PenaltyParameterTooSmall { r: f64 },

    #[error("schedule rejected: {reason}")]
    ScheduleRejected { reason: String },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("no strictly feasible point found: {0}")]
    SlaterNotFound(String),

    #[error("agent {agent} produced a non-finite gradient at round {round}")]
    NonFiniteGradient { agent: usize, round: u64 },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that indicate invalid input rather than a failure at
    /// run time. Drives the CLI exit code.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteInput { .. }
                | Error::DimensionMismatch { .. }
                | Error::PenaltyParameterTooSmall { .. }
                | Error::ScheduleRejected { .. }
                | Error::Graph(_)
                | Error::InvalidInstance(_)
                | Error::SlaterNotFound(_)
                | Error::Config(_)
                | Error::Json(_)
        )
    }
}
