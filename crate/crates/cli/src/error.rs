use std::path::Path;

use advscore::{IngestError, ModelError, ReportError, ScoreError, SimError, StatsError};
use thiserror::Error;

/// Every failure maps to one machine-parsable class printed as
/// `error[<class>]: <message>` on a single line.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Ingest { path: String, source: IngestError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0} validation issue(s)")]
    Validation(usize),
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Ingest { .. } => "ingest",
            CliError::Model(_) => "model",
            CliError::Score(_) => "score",
            CliError::Stats(_) => "stats",
            CliError::Sim(_) => "sim",
            CliError::Report(_) => "report",
            CliError::Validation(_) => "validation",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            _ => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn ingest(path: &Path, source: IngestError) -> Self {
        CliError::Ingest {
            path: path.display().to_string(),
            source,
        }
    }

    /// The message with any line breaks folded, so it fits on one line.
    pub fn one_line(&self) -> String {
        format!(
            "error[{}]: {}",
            self.class(),
            self.to_string()
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
        )
    }
}

pub trait ConfigErr<T> {
    fn config_err(self) -> Result<T, CliError>;
}

impl<T> ConfigErr<T> for Result<T, ModelError> {
    fn config_err(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Config(e.to_string()))
    }
}
