use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("security {security}: two-year window ending {window_end} extends past available data ending {data_end}")]
    TruncatedWindow {
        security: String,
        window_end: chrono::NaiveDate,
        data_end: chrono::NaiveDate,
    },

    #[error("net volume ratio undefined: buy and sell volumes are both zero")]
    UndefinedRatio,

    #[error("infeasible hypergeometric arguments: population {population}, successes {successes}, draws {draws}, observed {observed}")]
    Hypergeometric {
        population: u64,
        successes: u64,
        draws: u64,
        observed: u64,
    },

    #[error("duplicate validated link {investor_i}-{investor_j} in state {state}")]
    DuplicateLink {
        investor_i: String,
        investor_j: String,
        state: String,
    },

    #[error("network is empty")]
    EmptyNetwork,

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("no attribute record for investor {0}")]
    MissingAttributes(String),

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Configuration problems are reported before any data is touched and map
    /// to a distinct process exit status.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
