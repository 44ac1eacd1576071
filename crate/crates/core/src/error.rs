use thiserror::Error;

/// Which side of a PSD factorization a factor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorSide {
    Row,
    Column,
}

impl std::fmt::Display for FactorSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FactorSide::Row => f.write_str("row"),
            FactorSide::Column => f.write_str("column"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("ragged matrix: row {row} has {found} entries, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("column {0} sums to zero")]
    ZeroColumn(usize),
    #[error("matrix sums to zero")]
    ZeroMatrix,
    #[error("column {col} sums to {sum}, not 1")]
    NotStochastic { col: usize, sum: f64 },
    #[error("entries sum to {0}, not 1")]
    NotJoint(f64),
    #[error("scaling factor {index} = {value} is not positive")]
    NonPositiveFactor { index: usize, value: f64 },
    #[error("expected {expected} factors, found {found}")]
    FactorCount { expected: usize, found: usize },
    #[error("rank {r} must satisfy 1 <= r <= min({n}, {m})")]
    InvalidRank { n: usize, m: usize, r: usize },
    #[error("no rank-{r} sample after {retries} retries")]
    RankDeficientAfterRetries { r: usize, retries: usize },
    #[error("csv parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),

    #[error("vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("vector is not a probability distribution: {0}")]
    NotADistribution(String),

    #[error("row selection invalid: {0}")]
    InvalidRowSelection(String),
    #[error("selected rows are numerically independent (sigma_min / sigma_max = {ratio:e})")]
    NoDependence { ratio: f64 },
    #[error("dependence vector has only one sign")]
    SignDegeneracy,
    #[error("eps = {eps} outside [{lo}, {hi}]")]
    EpsOutOfInterval { eps: f64, lo: f64, hi: f64 },
    #[error("reduction step {step}: {source}")]
    ReductionStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("solver did not converge: {iterations} iterations, gap {gap:e}")]
    SolverFailure { iterations: usize, gap: f64 },
    #[error("objective vector is zero")]
    ZeroObjectiveVector,
    #[error("grid oracle supports dimension <= 4, got {0}")]
    DimensionTooLarge(usize),

    #[error("unsupported polytope family {0:?}")]
    UnsupportedFamily(String),
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),
    #[error("negative slack {value:e} at vertex {vertex}, facet {facet}")]
    NegativeSlack { vertex: usize, facet: usize, value: f64 },
    #[error("slack matrix has rank {found}, expected dim + 1 = {expected}")]
    SlackRank { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{side} factor {index} is not PSD (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { index: usize, side: FactorSide, min_eigenvalue: f64 },
    #[error("{side} factor {index} is not symmetric")]
    FactorNotSymmetric { index: usize, side: FactorSide },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
