use std::path::PathBuf;

use crate::losses::AdmmState;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input violates a documented precondition.
    #[error("validation: {0}")]
    Validation(String),

    /// A structural property of the problem does not hold (e.g. rank).
    #[error("structural: {0}")]
    Structural(String),

    /// A value lies outside the domain of a function (e.g. log of a non-positive diagonal).
    #[error("domain: {0}")]
    Domain(String),

    /// Floating point breakdown: eigen failure, non-finite values.
    #[error("numerical: {0}")]
    Numerical(String),

    /// The outer ADMM produced a non-finite objective; carries the last finite state.
    #[error("numerical: objective diverged at iteration {iter}")]
    Diverged {
        iter: usize,
        last_state: Box<AdmmState>,
    },

    /// A metric is undefined for the given input (zero denominator).
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

impl Error {
    /// Short machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Structural(_) => "structural",
            Error::Domain(_) => "domain",
            Error::Numerical(_) | Error::Diverged { .. } => "numerical",
            Error::Undefined(_) => "undefined",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }

    /// Process exit code used by the command line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Diverged { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
