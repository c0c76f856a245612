use crate::message::MessageError;

/// Errors shared across the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown rule id {0:?}")]
    UnknownRuleId(String),
    #[error("total cost is zero; ROI is undefined")]
    ZeroCost,
    #[error("unknown operating mode {0:?}")]
    UnknownMode(String),
    #[error("message {0} has no ground-truth label")]
    Unlabeled(String),
    #[error("stratum ({source_tag}, {label}) has {count} items; at least 3 are needed")]
    TooSmallStratum { source_tag: String, label: String, count: usize },
    #[error("no discordant pairs")]
    DegeneratePair,
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("empty sample")]
    EmptySample,
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Message(#[from] MessageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
