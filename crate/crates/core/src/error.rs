use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("internal error: {0}")]
    Internal(String),

    /// The sampler could not start because the initial point has zero density.
    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("convergence gate failed in stage {stage}: {detail}")]
    Convergence { stage: String, detail: String },

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {}: {detail}", path.display())]
    Parse { path: PathBuf, detail: String },
}

impl Error {
    /// Stable machine-readable code, used by the command line for its error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "E_DOMAIN",
            Error::Validation(_) => "E_VALIDATION",
            Error::Dimension(_) => "E_DIMENSION",
            Error::Internal(_) => "E_INTERNAL",
            Error::Initialization(_) => "E_INIT",
            Error::Convergence { .. } => "E_CONVERGENCE",
            Error::Io { .. } => "E_IO",
            Error::Parse { .. } => "E_PARSE",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.to_string(),
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
