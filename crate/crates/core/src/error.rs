use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("support of {outcomes} outcomes exceeds the enumeration capacity of {capacity}")]
    Capacity { outcomes: u128, capacity: u128 },

    #[error("non-finite iterate at iteration {iteration}")]
    NonFinite { iteration: u64 },

    #[error("trial {trial} at T = {horizon} failed (replay seed {seed:#018x}): {source}")]
    Trial {
        trial: usize,
        horizon: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}

pub(crate) fn config_err<T>(key: impl Into<String>, message: impl Into<String>) -> Result<T> {
    Err(Error::Config {
        key: key.into(),
        message: message.into(),
    })
}
