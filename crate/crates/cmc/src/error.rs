use std::path::PathBuf;

use thiserror::Error;

/// Errors of the file formats, the harness and the command line.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] cmc_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NUMERICAL: u8 = 4;
    pub const MAX_ITERS: u8 = 5;
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use cmc_core::Error as C;
        match self {
            Error::Config(_) => exit::CONFIG,
            Error::Core(C::InvalidConfig(_) | C::InvalidModel(_) | C::Unsupported(_)) => exit::CONFIG,
            Error::Core(C::Numerical(_)) => exit::NUMERICAL,
            Error::Core(_) | Error::Io { .. } | Error::Parse { .. } | Error::Json { .. } | Error::Data(_) => {
                exit::DATA
            }
        }
    }
}
