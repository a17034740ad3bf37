use std::path::Path;

use thiserror::Error;

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Fit(String),

    /// A check the run was asked to perform did not hold.
    #[error("verification failed: {0}")]
    Verify(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] tcq_core::Error),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code: 1 verification or fit failure, 2 configuration, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Verify(_) | BenchError::Fit(_) => 1,
            BenchError::Core(tcq_core::Error::Fit(_)) => 1,
            BenchError::Config(_) | BenchError::Core(_) => 2,
            BenchError::Io { .. } => 3,
        }
    }
}
