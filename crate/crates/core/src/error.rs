use thiserror::Error;

/// Error taxonomy. The split mirrors how callers have to react: `Parse` and
/// `Io` mean a bad input artifact, `Config` and `Infeasible` mean the run
/// could never execute as requested, `Domain` means a value escaped its
/// documented range.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed text artifact. `line` is 1-based within the offending file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A value outside its documented domain (bad intrinsics, id overflow,
    /// mismatched mask dimensions, ...).
    #[error("{0}")]
    Domain(String),

    /// A run configuration that can never execute (grid budget, bad flag
    /// combination, ...).
    #[error("{0}")]
    Config(String),

    /// A scene or query spec that cannot be realized.
    #[error("{0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
