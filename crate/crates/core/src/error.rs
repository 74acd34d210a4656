use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty interaction log")]
    EmptyLog,

    #[error("need at least 2 learners to split, got {0}")]
    TooFewLearners(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("snapshot value {value} at (question {question}, learner {learner}) is outside [0, 1]")]
    ValueOutOfRange {
        question: usize,
        learner: usize,
        value: f64,
    },

    #[error("snapshot shape mismatch: {0}")]
    Shape(String),

    #[error("k = {k} exceeds question pool size {pool}")]
    KTooLarge { k: usize, pool: usize },

    #[error("invalid assessment: {0}")]
    InvalidAssessment(String),

    #[error("snapshot has no learner discrimination; lambda undefined")]
    DegenerateLambda,

    #[error("instance too large for exhaustive search ({combinations} subsets, limit {limit})")]
    TooLargeForExhaustive { combinations: u128, limit: u128 },

    #[error("rasch fit diverged at epoch {epoch}: non-finite likelihood")]
    Diverged { epoch: usize },

    #[error("{entity} `{id}` has no interactions")]
    NoInteractions { entity: &'static str, id: String },

    #[error("{message} (line {line})")]
    Parse { line: u64, message: String },

    #[error("non-monotone order for learner `{learner}` (line {line})")]
    NonMonotoneOrder { learner: String, line: u64 },

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used by the CLI for machine-readable errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyLog => "empty_log",
            Error::TooFewLearners(_) => "too_few_learners",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::ValueOutOfRange { .. } => "value_out_of_range",
            Error::Shape(_) => "shape",
            Error::KTooLarge { .. } => "k_too_large",
            Error::InvalidAssessment(_) => "invalid_assessment",
            Error::DegenerateLambda => "degenerate_lambda",
            Error::TooLargeForExhaustive { .. } => "too_large_for_exhaustive",
            Error::Diverged { .. } => "diverged",
            Error::NoInteractions { .. } => "no_interactions",
            Error::Parse { .. } => "parse",
            Error::NonMonotoneOrder { .. } => "non_monotone_order",
            Error::UnknownId(_) => "unknown_id",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
