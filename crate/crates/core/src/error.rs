use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh size {0}: need at least one subdivision per side")]
    InvalidMeshSize(usize),

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("subdomain is empty")]
    EmptyDomain,

    #[error("subdomain is not contained in the enclosing domain (element {0} missing)")]
    NotNested(usize),

    #[error("vector is not in H0: dof {dof} on the layer has value {value:e}")]
    NotInH0 { dof: usize, value: f64 },

    #[error("vertex {0} is not covered by any partition-of-unity plateau")]
    UncoveredVertex(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "matrix is not positive definite (pivot {pivot} = {value:e}); \
         the penalty parameter gamma0 is probably below the coercive range"
    )]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("form is numerically indefinite: quadratic value {0:e}")]
    Indefinite(f64),

    #[error("requested {requested} modes but only {available} are available")]
    TooManyModes { requested: usize, available: usize },

    #[error("decay fit needs at least 5 finite positive values, got {0}")]
    FitRefused(usize),

    #[error("config line {line}: {key}: {message}")]
    Config { line: usize, key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
