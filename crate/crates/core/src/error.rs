use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty-corpus: corpus contains no tokens")]
    EmptyCorpus,

    #[error("unseen-context: context has zero occurrences")]
    UnseenContext,

    #[error("insufficient-pool: requested {requested} sequences from a pool of {available}")]
    InsufficientPool { requested: usize, available: usize },

    #[error("zero-probability: target probability of token {index} is not strictly positive")]
    ZeroProbability { index: usize },

    #[error("negative-alpha: slack {slack} is below the minimal slack {min_slack}")]
    NegativeAlpha { slack: f64, min_slack: f64 },

    #[error("invalid-rate: accumulation rate k must be positive and finite, got {0}")]
    InvalidRate(f64),

    #[error("undefined-ratio: error sums are zero up to generation {0}")]
    UndefinedRatio(u64),

    #[error("probe-unseen: probe context `{0}` does not occur in the initial training set")]
    ProbeUnseen(String),

    #[error("convergent error series: schedule is summable, the limit-ratio scan does not apply")]
    SummableSchedule,

    #[error("schedule exhausted: explicit schedule defines {defined} generations, generation {requested} requested")]
    ScheduleExhausted { defined: u64, requested: u64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown token `{0}`")]
    UnknownToken(String),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
