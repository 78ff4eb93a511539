use thiserror::Error;

use crate::model::SourceId;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("undefined false-positive rate: precision is zero")]
    UndefinedFalsePositiveRate,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("value `{0}` is already selected")]
    AlreadySelected(String),

    #[error("unknown source `{0}`")]
    UnknownSource(SourceId),

    #[error("degenerate evidence: every likelihood is zero")]
    DegenerateEvidence,

    #[error("degenerate votes: conditional denominator is zero")]
    DegenerateVotes,

    #[error("instance too large for exact enumeration ({candidates} candidates, cap {cap}); use approximation")]
    InstanceTooLarge { candidates: usize, cap: usize },

    #[error("infinite vote count; clamp accuracy below 1")]
    InfiniteVoteCount,

    #[error("infinite stop vote; clamp recall below 1")]
    InfiniteStopVote,

    #[error("accuracy undefined for zero-precision source `{0}`")]
    ZeroPrecision(SourceId),

    #[error("no good sources remain")]
    NoGoodSources,

    #[error("mismatched candidate sets between results for item `{0}`")]
    MismatchedCandidates(String),

    #[error("false domain too small: need {needed} distinct false values, domain has {domain}")]
    FalseDomainTooSmall { needed: usize, domain: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl FusionError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        FusionError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = FusionError> = std::result::Result<T, E>;
