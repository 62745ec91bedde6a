//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is outside the function's domain (negative
    /// distance, non-positive length scale, non-positive concentration, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Tensor or parameter shapes disagree (class counts, grid dims,
    /// filter size vs. grid resolution, ...).
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration or parameter file contains an unknown key or an
    /// invalid value. Distinct from `Parse` so callers can treat it as a
    /// usage error rather than bad data.
    #[error("config error: {0}")]
    Config(String),

    /// A data file failed to parse; carries the location for diagnostics.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A binary map or frame file violates its format contract.
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    /// A binary file ended mid-record.
    #[error("{path}: truncated at record {record}")]
    Truncated { path: PathBuf, record: u64 },

    /// An error raised while fusing a specific frame of a sequence.
    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    /// The training loss became NaN or infinite.
    #[error("non-finite loss at sample {sample}")]
    NonFiniteLoss { sample: usize },

    /// An I/O failure, tagged with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// An I/O failure tagged with the path involved.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tag an error with the frame index it occurred at.
    pub(crate) fn at_frame(frame: usize, source: Error) -> Self {
        Error::Frame {
            frame,
            source: Box::new(source),
        }
    }
}
