use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("depth must be positive, got {0}")]
    InvalidDepth(f64),

    #[error("{context}: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch { context: String, expected_width: usize, expected_height: usize, width: usize, height: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Malformed { path: path.into(), message: message.to_string() }
    }

    /// True for failures reading or writing files, as opposed to bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Malformed { .. })
    }
}
