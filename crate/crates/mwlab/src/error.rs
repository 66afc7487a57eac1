use thiserror::Error;

/// Every failure the library can report.
///
/// The variant is part of the external contract: the CLI maps
/// `Config`/`Construction` to exit code 2 and everything raised while a
/// check runs to a failed ledger entry.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("degenerate weight: {0}")]
    DegenerateWeight(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn construction(msg: impl Into<String>) -> Error {
    Error::Construction(msg.into())
}
