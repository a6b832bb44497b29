use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot standardize a constant vector")]
    ConstantVector,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("power must be non-negative, got {0}")]
    NegativeAlpha(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("subspaces overlap: {0}")]
    OverlappingSubspaces(String),

    #[error("bad partition: {0}")]
    BadPartition(String),

    #[error("empty sub-group in partition")]
    EmptySubgroup,

    #[error("factors are not mutually orthogonal (|<F{0}|F{1}>| = {2:e})")]
    NonOrthogonalFactors(usize, usize, f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resultant vanished while estimating {0}")]
    ZeroResultant(String),

    #[error("group {0} is degenerate (all columns constant)")]
    DegenerateGroup(String),

    #[error("latent variable {0} appears in no equation")]
    IsolatedLv(String),

    #[error("interaction modulation for {0} has {1} near-zero entries")]
    NearZeroModulation(String, usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },

    #[error("model is invalid: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),

    #[error("cannot parse {value:?} as a number at row {row}, column {col}")]
    ParseCell { row: usize, col: usize, value: String },

    #[error("missing value at row {row}, column {col}")]
    MissingValue { row: usize, col: usize },

    #[error("duplicate header {0:?}")]
    DuplicateHeader(String),

    #[error("data has a header but no rows")]
    EmptyData,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
