use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("variable index {index} out of range for a problem with {n} variables")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("problem has no variables")]
    EmptyProblem,

    #[error("problem with {n} variables exceeds the brute-force limit of {max}")]
    TooLarge { n: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("labels contain a single class; both classes are required")]
    DegenerateLabels,

    #[error("zero-length vector has no direction")]
    DegenerateVector,

    #[error("model has an all-zero weight vector")]
    DegenerateModel,

    #[error("model kind mismatch: expected {expected}, got {got}")]
    ModelKind {
        expected: &'static str,
        got: &'static str,
    },

    #[error("linear system is singular")]
    Singular,

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid distance matrix: {0}")]
    InvalidDistance(String),

    #[error("clusters {0} and {1} share a centroid; separation is undefined")]
    UndefinedSeparation(usize, usize),

    #[error("batch of {n_b} instances retains zero instances at fraction {fraction}")]
    EmptyRetention { n_b: usize, fraction: f64 },

    #[error("records carry no labels; method `{0}` needs binary labels")]
    MissingLabels(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
