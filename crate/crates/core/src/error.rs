use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("row {row}: candidate {candidate} appears more than once")]
    DuplicateCandidate { row: usize, candidate: usize },

    #[error("row {row}: candidate {candidate} is outside 1..={n_candidates}")]
    CandidateOutOfRange {
        row: usize,
        candidate: usize,
        n_candidates: usize,
    },

    #[error("row {row}: ballot has no preferences")]
    EmptyBallot { row: usize },

    #[error("{ballots} ballots but {covariates} covariate rows")]
    RowCountMismatch { ballots: usize, covariates: usize },

    #[error("row {row}: expected {expected} covariates, found {found}")]
    CovariateWidth {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: covariate value is not finite")]
    NonFiniteCovariate { row: usize, column: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("component {component} has no responsibility mass")]
    DegenerateComponent { component: usize },

    #[error("gating bound matrix is singular; null direction {direction:?}")]
    SingularGating { direction: Vec<f64> },

    #[error("all {starts} random starts failed: {last}")]
    AllStartsFailed { starts: usize, last: Box<Error> },

    #[error("no ballots to count")]
    NoBallots,

    #[error("unresolved elimination tie among candidates {tied:?}")]
    UnresolvedTie { tied: Vec<usize> },

    #[error("seats must be at least 1")]
    NoSeats,

    #[error("only single-seat counts are supported, got {0} seats")]
    MultiSeat(usize),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("voter id mismatch: {0}")]
    IdMismatch(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
