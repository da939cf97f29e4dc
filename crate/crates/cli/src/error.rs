use std::path::Path;

use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_STAGE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: lmface::Error,
    },
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// `1` stage failure, `2` configuration error, `3` I/O error. A stage
    /// that failed on I/O reports `3`.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Stage { source, .. } => match source {
                lmface::Error::Io { .. } => EXIT_IO,
                _ => EXIT_STAGE,
            },
        }
    }
}
