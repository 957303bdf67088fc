use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed triple on line {0}: expected 3 tab-separated fields")]
    MalformedTriple(usize),
    #[error("malformed alias on line {line}: {reason}")]
    MalformedAlias { line: usize, reason: String },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown surface form `{0}`")]
    UnknownSurface(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("knowledge sequence is empty")]
    EmptyKnowledgeSequence,
    #[error("entity-graph variants have different node sets")]
    NodeSetMismatch,
    #[error("sentence has no tokens")]
    EmptySentence,
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("label {label} on line {line} is not 0 or 1")]
    Label { line: usize, label: i64 },
    #[error("question on line {0} has no candidates")]
    EmptyCandidates(usize),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("ranking has no positive label")]
    NoPositive,
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("unknown question id `{0}`")]
    UnknownQid(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("input file not found: {0}")]
    MissingInput(PathBuf),
    #[error("attention weights are not a distribution: {0}")]
    NotNormalized(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 = input error, 3 = consistency error, 4 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigMismatch(_)
            | Error::NodeSetMismatch
            | Error::Format(_)
            | Error::NotNormalized(_) => 3,
            Error::NonFinite(_) => 4,
            _ => 2,
        }
    }
}
