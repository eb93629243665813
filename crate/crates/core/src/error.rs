use thiserror::Error;

/// Errors raised by the library.
///
/// The CLI maps every variant except [`Error::VerdictFailed`] to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("item {item} out of range for a universe of {universe} items")]
    ItemOutOfRange { item: usize, universe: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// An exhaustive computation would exceed its configured limit.
    #[error("resource limit exceeded: {what} needs {needed}, limit is {limit}{hint}")]
    Resource {
        what: &'static str,
        needed: u128,
        limit: u128,
        hint: &'static str,
    },

    #[error("{0} verdict(s) failed")]
    VerdictFailed(usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
