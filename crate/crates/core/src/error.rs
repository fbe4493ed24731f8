use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence of length {len} exceeds fixed length {max}")]
    LengthOverflow { len: usize, max: usize },

    #[error("alphabet error: {0}")]
    Alphabet(String),

    #[error("parse error in {source_name} at {record}: {message}")]
    Parse {
        source_name: String,
        record: String,
        message: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("sequence is empty after gap removal")]
    EmptySequence,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate feature dimension `{0}` has zero variance")]
    DegenerateFeature(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainingDivergence { epoch: usize, detail: String },

    #[error("sampler diverged at step {step}: {detail}")]
    SamplerDivergence { step: usize, detail: String },

    #[error("checksum mismatch: {0}")]
    Checksum(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
