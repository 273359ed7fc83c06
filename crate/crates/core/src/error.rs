use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped so the command-line driver can map each one onto a
/// stable exit code (see [`GmnbError::exit_code`]).
#[derive(Debug, Error)]
pub enum GmnbError {
    /// A distribution parameter outside its support.
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    /// Shapes that do not line up (gene sets, time grids, state dimensions).
    #[error("structural error: {0}")]
    Structural(String),

    /// A user-supplied value that violates a type invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A numeric invariant of the sampler was violated mid-run.
    #[error("numeric error at iteration {iteration}, gene {gene}, time {time}: {detail}")]
    Numeric {
        iteration: usize,
        gene: usize,
        time: usize,
        detail: String,
    },

    /// Malformed input file.
    #[error("parse error in {path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl GmnbError {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        GmnbError::Domain {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        GmnbError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            GmnbError::Domain { .. }
            | GmnbError::Structural(_)
            | GmnbError::Validation(_)
            | GmnbError::Parse { .. } => 2,
            GmnbError::Numeric { .. } => 3,
            GmnbError::Io { .. } => 4,
        }
    }

    /// Short machine-parsable tag for the error class.
    pub fn code(&self) -> &'static str {
        match self {
            GmnbError::Domain { .. } => "E_DOMAIN",
            GmnbError::Structural(_) => "E_STRUCTURE",
            GmnbError::Validation(_) => "E_VALIDATION",
            GmnbError::Numeric { .. } => "E_NUMERIC",
            GmnbError::Parse { .. } => "E_PARSE",
            GmnbError::Io { .. } => "E_IO",
        }
    }
}

pub type Result<T> = std::result::Result<T, GmnbError>;
