use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("population {population} exceeded cap {cap} at loop {loop_index}")]
    PopulationCap {
        loop_index: usize,
        population: usize,
        cap: usize,
    },

    #[error("run {run} failed: population {population} exceeded cap {cap} at loop {loop_index} ({failed} of {total} runs failed; partial results written)")]
    RunFailed {
        run: usize,
        loop_index: usize,
        population: usize,
        cap: usize,
        failed: usize,
        total: usize,
    },

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("accuracy: {0}")]
    Accuracy(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("undefined limit: {0}")]
    UndefinedLimit(String),

    #[error("at least two runs are required for error estimates, got {0}")]
    TooFewRuns(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
