use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("{path}: {malformed} of {total} records are malformed (more than 10%)")]
    TooManyMalformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
    },

    #[error("line {line}: invalid severity {value:?} (expected 1 or 2)")]
    InvalidSeverity { line: usize, value: String },

    #[error("line {line}: empty lexicon word")]
    EmptyWord { line: usize },

    #[error("tweet {0} has no mentions")]
    NoTargets(String),

    #[error("tweet {0} only mentions its own author")]
    SelfMentionOnly(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("backward called before a forward pass was recorded")]
    BackwardBeforeForward,

    #[error("reputation undefined: followers and friends are both zero for {0}")]
    UndefinedReputation(String),

    #[error("labels contain a single class; need both classes")]
    SingleClass,

    #[error("empty vocabulary after thresholding")]
    EmptyVocabulary,

    #[error("no profile for account holder {0}")]
    MissingProfile(String),

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("model is not fitted: {0}")]
    NotFitted(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
