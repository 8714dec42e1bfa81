use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown system `{name}`; valid systems: {}", valid.join(", "))]
    UnknownSystem { name: String, valid: Vec<String> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("feature `{feature}` overflowed (non-finite value at row {row})")]
    FeatureOverflow { feature: String, row: usize },

    #[error("non-uniform time step at sample {index}")]
    NonUniformTime { index: usize },

    #[error("no dynamics detected: every tracked object is static")]
    NoDynamics,

    #[error("ambiguous association at frame {frame}: {count} blobs within the match radius")]
    AmbiguousAssociation { frame: usize, count: usize },

    #[error("track lost at frame {frame}: no blob within the match radius")]
    TrackLost { frame: usize },

    #[error("{0} moving objects found; only a single moving object is supported")]
    MultipleMovingObjects(usize),

    #[error("non-finite loss at epoch {epoch} (last finite recon {last_recon:e}, eq {last_eq:e})")]
    NonFiniteLoss { epoch: usize, last_recon: f64, last_eq: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("corrupt file {path}: expected {expected} bytes, found {found}")]
    Corrupt { path: PathBuf, expected: u64, found: u64 },

    #[error("bad header in {path}: {reason}")]
    BadHeader { path: PathBuf, reason: String },

    #[error("unsupported format version {found} in {path} (supported: {supported})")]
    UnsupportedVersion { path: PathBuf, found: u32, supported: u32 },

    #[error("too many features for exhaustive search: {0} (max 12)")]
    TooManyFeatures(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io { context: String, #[source] source: std::io::Error },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
