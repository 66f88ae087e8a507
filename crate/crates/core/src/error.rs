use std::path::PathBuf;

use crate::lexkb::SynsetId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error")]
    Write(#[from] std::io::Error),

    #[error("line {line}: malformed record: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("line {line}: duplicate synset id {id}")]
    DuplicateSynset { line: usize, id: SynsetId },

    #[error("line {line}: synset {from} has an edge to unknown synset {to}")]
    UnknownEdge {
        line: usize,
        from: SynsetId,
        to: SynsetId,
    },

    #[error("unknown synset {0}")]
    UnknownSynset(SynsetId),

    #[error("line {line}: {what} index {index} out of range for length {len}")]
    IndexOutOfRange {
        line: usize,
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("line {line}: duplicate annotation for token {token}")]
    DuplicateAnnotation { line: usize, token: usize },

    #[error("line {line}: duplicate instance id {iid}")]
    DuplicateInstance { line: usize, iid: String },

    #[error(
        "sentence count mismatch: bitext has {bitext} pairs, alignment file has {alignments} lines"
    )]
    CountMismatch { bitext: usize, alignments: usize },

    #[error("cannot train an aligner on an empty bitext")]
    EmptyBitext,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("teleport vector is empty or has zero mass")]
    EmptyTeleport,

    #[error("personalized PageRank did not converge within {iterations} iterations (last L1 change {delta:e})")]
    NonConvergence { iterations: usize, delta: f64 },

    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("infeasible world specification: {0}")]
    InfeasibleWorld(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(line: usize, msg: impl std::fmt::Display) -> Self {
        Error::Malformed {
            line,
            msg: msg.to_string(),
        }
    }
}
