use thiserror::Error;

/// Errors raised by the simulator, the analytic solvers and the experiment
/// harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field failed validation.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Requested parameters give an unstable (non-ergodic) system.
    #[error("unstable parameters: {0}")]
    Unstable(String),

    /// A simulation cell failed inside an experiment.
    #[error("experiment cell {cell} failed: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    /// Simulation cells and analytic tails could not be paired.
    #[error("coordinate mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
