use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    Basis(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{}:{line}: column `{column}`: {message}", path.display())]
    Csv {
        path: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sampler failed: {0}")]
    Sampler(String),

    #[error("{0}")]
    Summary(String),

    #[error("not converged (R-hat at or above threshold): {}", .0.join(", "))]
    NotConverged(Vec<String>),

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::MissingArtifact(_) | Error::NotConverged(_)
        )
    }

    /// Process exit status: 2 validation, 3 convergence, 4 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged(_) => 3,
            Error::Io { .. } | Error::MissingArtifact(_) => 4,
            _ => 2,
        }
    }
}
