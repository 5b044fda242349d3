use std::path::PathBuf;

/// Errors raised across the crate.
///
/// Variants map onto the CLI exit codes: configuration and usage problems
/// exit with 1, data/format/IO problems with 2, numeric failures with 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    /// A table lacks a column its consumer needs, or a cell does not parse.
    #[error("format error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("integration error: {0}")]
    Integration(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("phase boundaries undefined: {0}")]
    UndefinedBoundaries(String),

    #[error("inconsistent moment spec: {0}")]
    InconsistentSpec(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_)
            | Error::Format { .. }
            | Error::Schema { .. }
            | Error::Io { .. }
            | Error::InsufficientData(_)
            | Error::UndefinedBoundaries(_)
            | Error::InconsistentSpec(_) => 2,
            Error::Numeric(_) | Error::Integration(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
