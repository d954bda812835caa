use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no episodes found in {0}")]
    NoEpisodes(PathBuf),
    #[error("{path}: malformed header field `{field}`")]
    MalformedHeader { path: PathBuf, field: &'static str },
    #[error("{path}: dimension mismatch in `{field}`: expected {expected}, found {actual}")]
    DimensionMismatch {
        path: PathBuf,
        field: &'static str,
        expected: u64,
        actual: u64,
    },
    #[error("{path}: raster size mismatch in frame {frame}: expected {expected} bytes, found {available}")]
    RasterSizeMismatch {
        path: PathBuf,
        frame: usize,
        expected: usize,
        available: usize,
    },
    #[error("{path}: truncated `{field}` in frame {frame}")]
    Truncated {
        path: PathBuf,
        field: &'static str,
        frame: usize,
    },
    #[error("{path}: {extra} trailing bytes")]
    TrailingBytes { path: PathBuf, extra: usize },
    #[error("{path}: invalid value for `{field}`: {value}")]
    InvalidValue {
        path: PathBuf,
        field: &'static str,
        value: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            FormatError::MissingFile(path)
        } else {
            FormatError::Io { path, source }
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        FormatError::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        FormatError::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;
