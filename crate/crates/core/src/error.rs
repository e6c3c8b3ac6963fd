use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("timestep {t} out of range for a schedule with {steps} steps")]
    TimestepOutOfRange { t: usize, steps: usize },

    #[error("arity mismatch for {feature}: expected {expected} values, got {got}")]
    ArityMismatch {
        feature: String,
        expected: usize,
        got: usize,
    },

    #[error("unknown match function `{0}`")]
    UnknownMatchFunction(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("unknown image adjustment `{0}`")]
    UnknownAdjustment(String),

    #[error("library is empty")]
    EmptyLibrary,

    #[error("feature `{feature}` is absent from record {noise_id}")]
    FeatureAbsent { feature: String, noise_id: u64 },

    #[error("k = {k} out of range for {n} candidates")]
    KOutOfRange { k: usize, n: usize },

    #[error("stage {stage}: keep = {keep} exceeds the {survivors} surviving candidates")]
    KeepExceedsSurvivors {
        stage: usize,
        keep: usize,
        survivors: usize,
    },

    #[error("unsupported library format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated noise blob {path}: expected {expected} bytes, found {actual}")]
    TruncatedBlob {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}:{line}: malformed record: {source}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("no posterior image for noise id {0}")]
    MissingImage(u64),

    #[error("unknown noise id {0}")]
    UnknownNoiseId(u64),

    #[error("noise id {id}: embedding has dimension {got}, library expects {expected}")]
    DimensionMismatch { id: u64, expected: usize, got: usize },

    #[error("noise id {id}: non-finite value in {what}")]
    NonFinite { id: u64, what: String },

    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
