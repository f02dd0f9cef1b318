use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty domain: no arms provided")]
    EmptyDomain,
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: non-finite embedding entry at position {position}")]
    NonFiniteEmbedding { line: usize, position: usize },
    #[error("line {line}: embedding dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("line {line}: empty candidate list for context {context_id:?}")]
    EmptyContext { line: usize, context_id: String },

    #[error("iteration {found} does not follow last stored iteration {last}")]
    NonIncreasingIteration { last: u64, found: u64 },
    #[error("invalid preference record: {0}")]
    InvalidRecord(String),
    #[error("record at iteration {iteration} references arm {index} outside a domain of {size}")]
    ArmOutOfRange {
        iteration: u64,
        index: usize,
        size: usize,
    },
    #[error("unknown context {0:?}")]
    UnknownContext(String),

    #[error("input has dimension {found}, network expects {expected}")]
    InputDimension { expected: usize, found: usize },
    #[error("vector has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("training produced a non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("need at least {needed} arms, domain has {found}")]
    TooFewArms { needed: usize, found: usize },
    #[error("queried set is empty")]
    EmptyQueriedSet,

    #[error("unknown arm {0:?}")]
    UnknownArm(String),
    #[error("score vector is constant; cannot standardize")]
    ConstantScores,
    #[error("no preference query is pending")]
    NoPendingQuery,
    #[error("preference for iteration {0} was already submitted")]
    DuplicateSubmit(u64),

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trial aborted at iteration {iteration}: {source}")]
    Trial {
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
