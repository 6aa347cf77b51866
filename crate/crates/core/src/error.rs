use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {col}: cannot parse {value:?} as a finite number")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("column {0} has zero variance")]
    ConstantColumn(usize),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),

    #[error("parent-set size {k} out of range for {n} nodes")]
    SizeOutOfRange { n: usize, k: usize },
    #[error("numeric failure for node {node} with parents {parents:?}: {reason}")]
    NumericFailure {
        node: usize,
        parents: Vec<usize>,
        reason: String,
    },
    #[error("invalid candidate set: {0}")]
    InvalidCandidates(String),

    #[error("log-domain subtraction with subtrahend {b} above minuend {a}")]
    OrderViolation { a: f64, b: f64 },
    #[error("query set is not a subset of the constraining set")]
    NotSubset,

    #[error("requested {k} candidates but only {available} nodes are available")]
    KTooLarge { k: usize, available: usize },
    #[error("exact parent-set marginals are missing or malformed: {0}")]
    MarginalsMissing(String),

    #[error("partition has no neighbours (single node)")]
    NoMoves,
    #[error("graph contains a directed cycle")]
    CyclicGraph,
    #[error("no valid parent set for node {node} (partition {partition:?})")]
    EmptySupport {
        node: usize,
        partition: Option<usize>,
    },

    #[error("problem too large for exact enumeration: {0}")]
    TooLarge(String),
    #[error("partition-sum oracle needs unrestricted candidates (node {node} has {k} of {n_minus_one})")]
    CandidateRestricted {
        node: usize,
        k: usize,
        n_minus_one: usize,
    },

    #[error("singular parent block for node {node} (dag {dag:?})")]
    SingularBlock { node: usize, dag: Option<usize> },
    #[error("edge-weight support contains a directed cycle")]
    CyclicSupport,

    #[error("average degree {0} out of range")]
    DegreeOutOfRange(f64),
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
