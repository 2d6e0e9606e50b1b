use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("index {index} out of range for {table} (size {size})")]
    IndexOutOfRange { table: String, index: usize, size: usize },

    #[error("learning-rate schedule is undefined at step 0")]
    ZeroStep,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown corpus tag `{0}`")]
    UnknownCorpusTag(String),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),

    #[error("invalid document `{id}`: {message}")]
    InvalidDocument { id: String, message: String },

    #[error("document `{id}` has {len} tokens, exceeding max_seq_len {max}")]
    DocumentTooLong { id: String, len: usize, max: usize },

    #[error("document `{0}` has a single segment; token-document relation needs at least two")]
    SingleSegment(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("permutation rank {rank} out of range for n = {n}")]
    RankOutOfRange { rank: u64, n: usize },

    #[error("corpus cannot furnish sentence-distance class {0}")]
    ClassUnavailable(u32),

    #[error("unknown discourse relation `{0}`")]
    UnknownRelation(String),

    #[error("relevance label {0} outside {{0, 1, 2}}")]
    InvalidRelevanceLabel(i64),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("head `{0}` is not registered")]
    UnknownHead(String),

    #[error("token head `{0}` has an empty loss mask")]
    EmptyLossMask(String),

    #[error("instance carries no labels for head `{0}`")]
    MissingLabels(String),

    #[error("more than one sentence-level head enabled: `{0}` and `{1}`")]
    MultipleSentenceHeads(String, String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("task {task} is infeasible: budget {budget} < reserve {reserve} x {later_stages} later stages")]
    InfeasibleReserve {
        task: u16,
        budget: u64,
        reserve: u64,
        later_stages: u64,
    },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("held-out set for task {0} is empty")]
    EmptyHeldout(u16),

    #[error("no data for task {0}")]
    NoData(u16),

    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSynthSpec(String),

    #[error("stage {stage}, step {step}: {source}")]
    AtStep {
        stage: usize,
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("strategy budgets differ: {0}")]
    BudgetMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
