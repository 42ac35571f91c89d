use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed container or file structure.
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed file that declares something we do not handle.
    #[error("unsupported {field}: {detail}")]
    Unsupported { field: &'static str, detail: String },

    #[error("bad magic {found:?}, expected \"MTX1\"")]
    BadMagic { found: [u8; 4] },

    #[error("truncated payload: header declares {expected} values, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("unknown phoneme symbol {0:?}")]
    UnknownPhone(String),

    #[error("phone index {0} outside the inventory")]
    PhoneIndex(usize),

    #[error("signal too short: {samples} samples, need at least {needed}")]
    TooShort { samples: usize, needed: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible alignment: {frames} frames cannot host {phones} phones")]
    Infeasible { frames: usize, phones: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("duration model has no entry for {0:?} and no global fallback")]
    MissingDuration(String),

    #[error("label {0} outside 0..=10")]
    Label(i64),

    #[error("training diverged: {0}")]
    NonFiniteLoss(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
