//! Errors of the harness and the command line.

use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] chanex_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// Every problem found in a config document, one entry per field.
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error("{0}")]
    NotFound(String),
    #[error("no completed runs to aggregate")]
    EmptyInput,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format { what, detail: detail.into() }
    }

    /// 1 when the request itself is wrong, 2 when running it failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::NotFound(_) | Error::EmptyInput => 1,
            Error::Core(chanex_core::Error::Config(_)) => 1,
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 1,
            _ => 2,
        }
    }
}

/// Attaches the path to an IO error.
pub(crate) fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}
