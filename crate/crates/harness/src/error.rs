use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no dictionary available: {0}")]
    MissingDictionary(String),
    #[error("trial seed {seed}: {source}")]
    Trial {
        seed: u64,
        #[source]
        source: jointsparse::Error,
    },
    #[error("trial seed {seed}: solver hit its iteration limit")]
    Unconverged { seed: u64 },
    #[error(transparent)]
    Core(#[from] jointsparse::Error),
}

impl HarnessError {
    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for bad configuration or input, 3 when a solve
    /// turned out infeasible, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        let infeasible = |e: &jointsparse::Error| matches!(e, jointsparse::Error::Infeasible { .. });
        match self {
            Self::Parse { .. } | Self::Config(_) => 2,
            Self::Core(e) | Self::Trial { source: e, .. } if infeasible(e) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
