use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index ({row}, {col}) out of range for dimension {dim}")]
    IndexOutOfRange { row: usize, col: usize, dim: usize },

    #[error("matrix is not symmetric at ({row}, {col}): {upper} vs {lower}")]
    Asymmetric {
        row: usize,
        col: usize,
        upper: f64,
        lower: f64,
    },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("diagonal entry {index} is {value}, expected strictly positive")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("invalid splitting: {0}")]
    InvalidSplitting(String),

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("vertices {0} and {1} lie in different components")]
    DifferentComponents(usize, usize),

    #[error("right-hand side is not orthogonal to the all-ones vector (|sum| = {sum:e}, tolerance {tolerance:e})")]
    NotOrthogonal { sum: f64, tolerance: f64 },

    #[error("accuracy parameter {0} outside (0, 1/2]")]
    InvalidEpsilon(f64),

    #[error("condition number bound {0} is below 1")]
    InvalidKappa(f64),

    #[error("sample budget exceeded: {requested} samples requested, cap is {cap}")]
    SampleBudgetExceeded { requested: u64, cap: u64 },

    #[error("squaring work {work} exceeds the configured cap {cap}")]
    WorkBudgetExceeded { work: u64, cap: u64 },

    #[error("dense operation on dimension {n} exceeds the limit {limit}")]
    DenseLimitExceeded { n: usize, limit: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("nullspaces disagree: residual {0:e} on the nullspace of the reference matrix")]
    NullspaceMismatch(f64),

    #[error("vertex {vertex} is not a neighbor of clique center {center}")]
    NotANeighbor { center: usize, vertex: usize },

    #[error("clique at center {center} has {degree} neighbors, at least 2 are required")]
    CliqueTooSmall { center: usize, degree: usize },

    #[error("negative quadratic form {0:e}: splitting is not positive semidefinite")]
    NegativeEnergy(f64),

    #[error("invalid generator spec `{spec}`: {reason}")]
    InvalidSpec { spec: String, reason: String },

    #[error("chain construction failed after {attempts} attempts: {reason}")]
    ChainConstruction { attempts: usize, reason: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
