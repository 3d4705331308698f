use std::path::PathBuf;

use oranguide_core::sac::SacError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed run record: {source}")]
    Record {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("training failed: {0}")]
    Train(#[from] SacError),
    #[error("analysis error: {0}")]
    Analysis(String),
}

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    /// CLI exit status: 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            BenchError::Config(_) => 1,
            _ => 2,
        }
    }
}
