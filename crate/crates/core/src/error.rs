use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no valid rating records ({rejected} lines rejected)")]
    NoRecords { rejected: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("partition `{0}` is empty")]
    EmptyPartition(String),

    #[error("{stage} diverged at epoch {epoch} (loss is not finite); try a smaller learning rate")]
    Diverged { stage: &'static str, epoch: usize },

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("item `{0}` has no embedding row; the feature partition does not cover it")]
    UnknownItem(String),

    #[error("not enough candidate items: need {needed}, only {available} available")]
    NotEnoughItems { needed: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("both classes must be present")]
    SingleClass,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("invalid notation `{code}`: {reason}")]
    Notation { code: String, reason: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}
