use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label {0:?}: labels must be nonempty and contain no tab or newline")]
    InvalidLabel(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("referential integrity: {0}")]
    Referential(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("conflicting performance edges for ({algorithm}, {problem})")]
    ConflictingPerformance { algorithm: String, problem: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad input data rather than program state.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidLabel(_)
                | Error::Parse { .. }
                | Error::Referential(_)
                | Error::MissingData(_)
                | Error::ConflictingPerformance { .. }
                | Error::DimensionMismatch { .. }
                | Error::InvalidInput(_)
                | Error::Stratification(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
