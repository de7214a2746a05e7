use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("vector contains a non-finite value")]
    NonFinite,
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("row {row} is not unit norm (norm = {norm})")]
    NotUnitNorm { row: usize, norm: f64 },
    #[error("k = {k} exceeds the number of candidates ({len})")]
    KTooLarge { k: usize, len: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("label {0:?} is not one of the normal classes")]
    UnknownLabel(String),
    #[error("class {0:?} has no training samples")]
    EmptyClass(String),
    #[error("class {0:?} is not in the memory bank")]
    UnknownClass(String),
    #[error("dictionary is empty")]
    EmptyDictionary,
    #[error("memory bank has no statistics for this dictionary")]
    MissingDictStats,
    #[error("evaluation needs at least one normal and one anomalous sample")]
    OneClassOnly,
    #[error("cannot split {samples} samples into {buckets} quantile buckets")]
    DegenerateBucket { samples: usize, buckets: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding matrix has no rows")]
    EmptyMatrix,
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    VersionUnsupported(u16),
    #[error("file too short for header ({0} bytes)")]
    TruncatedHeader(usize),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("payload hash mismatch: manifest {expected}, computed {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error("manifest does not match embeddings: {0}")]
    ManifestMismatch(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the failure came from the filesystem rather than from the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
