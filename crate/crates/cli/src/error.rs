use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input {what}: {path}: {reason}")]
    MissingInput {
        what: String,
        path: PathBuf,
        reason: String,
    },

    #[error("missing input {0}: set paths.{0} in the config")]
    Unconfigured(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("config: {0}")]
    Config(String),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("gradient check failed for {0}")]
    GradCheckFailed(String),

    #[error(transparent)]
    Core(#[from] incivility::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn missing(what: &str, path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::MissingInput {
            what: what.to_string(),
            path: path.to_path_buf(),
            reason: err.to_string(),
        }
    }

    /// 2 for absent or empty inputs, 1 for every other failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput { .. } | CliError::Unconfigured(_) | CliError::EmptyInput(_) => {
                2
            }
            _ => 1,
        }
    }
}
