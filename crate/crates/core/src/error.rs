use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the retrieval, alignment and transfer pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid grasp pose: {0}")]
    InvalidGrasp(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate cloud: all points coincide")]
    DegenerateCloud,

    #[error("degenerate hand: {0}")]
    DegenerateHand(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("zero-norm vector in cosine similarity")]
    ZeroVector,

    #[error("no memory instance survives the exclusion filter")]
    EmptyMemory,

    #[error("rank deficient: requested {requested} components, achievable rank is {achievable}")]
    RankDeficient { requested: usize, achievable: usize },

    #[error("no memory point has a scene neighbor within {threshold} m")]
    NoOverlap { threshold: f64 },

    #[error("every refined candidate was rejected for lack of overlap")]
    AllCandidatesRejected,

    #[error("candidate grasp list is empty")]
    EmptyCandidates,

    #[error("no positive labels; average precision is undefined")]
    NoPositives,

    #[error("length mismatch: {scores} scores vs {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },

    #[error("corrupt manifest {path}: {reason}")]
    ManifestCorrupt { path: PathBuf, reason: String },

    #[error("store is locked by another writer: {0}")]
    StoreLocked(PathBuf),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
