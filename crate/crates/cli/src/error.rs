use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(#[source] vegabook_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Input errors from the engine are configuration problems; everything else
/// is numeric.
impl From<vegabook_core::Error> for CliError {
    fn from(e: vegabook_core::Error) -> Self {
        match e {
            vegabook_core::Error::InvalidInput(msg) => CliError::Config(msg),
            other => CliError::Numeric(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
