use std::path::PathBuf;

/// Errors produced by the simulator, the oracle and the statistics layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The requested configuration is malformed or self-contradictory.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A job exceeds a resource guard and no override was given.
    #[error("refused: {what} needs {required} but the limit is {limit} (use --force to override{hint})")]
    Guard {
        what: &'static str,
        required: u128,
        limit: u128,
        hint: &'static str,
    },

    /// Computed results contradict each other (e.g. an infeasible band).
    #[error("inconsistency: {0}")]
    Inconsistency(String),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
