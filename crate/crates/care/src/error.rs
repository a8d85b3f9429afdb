//! Error type shared by the IO, server and CLI layers.

use std::path::PathBuf;

use care_core::classify::ClassifyError;
use care_core::corpus::CorpusError;
use care_core::generate::GenerateError;
use care_core::safety::SafetyError;
use care_core::telemetry::TelemetryError;
use care_core::training::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum CareError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid model bundle at {}: {message}", path.display())]
    Bundle { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Safety(#[from] SafetyError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl CareError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CareError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn bundle(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CareError::Bundle {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = CareError> = std::result::Result<T, E>;
