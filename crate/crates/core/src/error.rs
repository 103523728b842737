use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate record id `{0}`")]
    DuplicateRecord(String),
    #[error("no keywords in any record")]
    EmptyKeywordUniverse,
    #[error("record `{0}` has a non-finite target")]
    NonFiniteTarget(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("unknown feature id {0}")]
    UnknownFeature(usize),
    #[error("unknown feature name `{0}`")]
    UnknownFeatureName(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("degenerate corpus: {0}")]
    DegenerateCorpus(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sampler could not start from a finite density")]
    NonFiniteInitialDensity,
    #[error("feedback for feature {0} that was not queried")]
    UnqueriedFeedback(usize),
    #[error("duplicate feedback for feature {0}")]
    DuplicateFeedback(usize),
    #[error("feedback does not match the pending query: {0}")]
    FeedbackMismatch(String),
    #[error("session is terminal")]
    Terminal,
    #[error("a query is already pending")]
    PendingQuery,
    #[error("no query is pending")]
    NoPendingQuery,
    #[error("corrupt record: {0}")]
    CorruptRecord(String),
    #[error("unsupported record version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable identifier, used by the CLI and the HTTP layer.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DuplicateRecord(_) => "duplicate_record",
            Error::EmptyKeywordUniverse => "empty_keyword_universe",
            Error::NonFiniteTarget(_) => "non_finite_target",
            Error::InvalidSplit(_) => "invalid_split",
            Error::UnknownFeature(_) | Error::UnknownFeatureName(_) => "unknown_feature",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Empty(_) => "empty_input",
            Error::DegenerateCorpus(_) => "degenerate_corpus",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NonFiniteInitialDensity => "non_finite_initial_density",
            Error::UnqueriedFeedback(_) => "unqueried_feedback",
            Error::DuplicateFeedback(_) => "duplicate_feedback",
            Error::FeedbackMismatch(_) => "feedback_mismatch",
            Error::Terminal => "terminal_session",
            Error::PendingQuery => "pending_query",
            Error::NoPendingQuery => "no_pending_query",
            Error::CorruptRecord(_) => "corrupt_record",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Numerical(_) => "numerical",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
