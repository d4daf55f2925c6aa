use alloc::string::String;

/// Errors raised by the core crate.
///
/// The variants follow the error classes used throughout the toolkit: bad
/// configuration, inputs outside an operation's mathematical domain, API
/// misuse, and training runs that blew up.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training diverged (config {config_hash}): nmse {nmse} at epoch {epoch}")]
    Diverged {
        config_hash: String,
        epoch: usize,
        nmse: f64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
