use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {path}, line {line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid label {0:?}: labels must be non-empty uppercase ASCII letters")]
    InvalidLabel(String),

    #[error("no data after filtering")]
    NoData,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate features: {0}")]
    DegenerateFeatures(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model file error: {0}")]
    Model(String),

    #[error("training failed{}: {message}", run.map(|r| format!(" (run {r})")).unwrap_or_default())]
    Training { run: Option<usize>, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
