use std::path::PathBuf;

/// Everything that can go wrong across the pipeline.
///
/// The CLI maps these onto exit codes, so the grouping matters:
/// `InvalidArgument` and `UnknownToken` are caller mistakes, `Io`/`Format`/
/// `Version` are data problems, and `Numeric`/`Training` mean the math fell
/// over.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input: bad magic bytes, truncated files, CSV rows that do
    /// not parse. `context` names the offending file or video.
    #[error("{context}: {message}")]
    Format { context: String, message: String },

    #[error("{path}: unsupported format version {found} (this build reads version {expected})")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Degenerate or non-finite numerics outside the training loop
    /// (constant metric inputs, singular solves, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}, cell {cell}: {message}")]
    Training {
        epoch: usize,
        cell: usize,
        message: String,
    },

    #[error("unknown token: {0:?}")]
    UnknownToken(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
