use std::path::PathBuf;

use nfc_core::NfcError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: NfcError,
    },
    #[error(transparent)]
    Core(#[from] NfcError),
    #[error("{failed} of {total} theorem checks failed")]
    VerificationFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Json { path, source }
    }

    fn core(&self) -> Option<&NfcError> {
        match self {
            CliError::Core(e) | CliError::Seed { source: e, .. } => Some(e),
            _ => None,
        }
    }

    /// 1 verification failure, 2 configuration or input error, 3 divergence.
    pub fn exit_code(&self) -> u8 {
        match (self, self.core()) {
            (CliError::VerificationFailed { .. }, _) => 1,
            (_, Some(NfcError::Divergence { .. })) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
