use thiserror::Error;

use crate::averaging::LevelTrace;

pub type Result<T> = std::result::Result<T, UlamError>;

#[derive(Debug, Clone, Error)]
pub enum UlamError {
    #[error("invalid algebra shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("evaluator failed at input {input}: {message}")]
    Evaluator { input: String, message: String },

    #[error("no spectral gap: eigenvalue {eigenvalue} lies in [{low}, {high}]")]
    NoSpectralGap {
        eigenvalue: f64,
        low: f64,
        high: f64,
    },

    #[error("matrix is not normal (residual {residual:e})")]
    NotNormal { residual: f64 },

    #[error("{what} is numerically singular (condition number {condition:e})")]
    Singular { what: String, condition: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error(
        "averaging failed to contract at level {level}: measured {measured:e} > bound {bound:e}"
    )]
    ContractionFailed {
        level: usize,
        measured: f64,
        bound: f64,
        trace: Vec<LevelTrace>,
    },

    #[error("averaged Gram matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("polar snap moved the matrix by {residual:e} (limit {limit:e})")]
    SnapFailed { residual: f64, limit: f64 },

    #[error("commutant solve is rank-deficient beyond tolerance: {0}")]
    CommutantRankDeficient(String),

    #[error("irreducibility check failed after recursion depth {depth}")]
    IrreducibilityFailed { depth: usize },

    #[error("eigenvalue within {distance:e} of -1: logarithm branch cut")]
    BranchCut { distance: f64 },

    #[error("orthogonalization of range projections failed: {0}")]
    OrthogonalizationFailed(String),

    #[error("measured ratio {ratio} exceeds the configured constant {limit}")]
    ConstantExceeded { ratio: f64, limit: f64 },

    #[error("multiplicity mismatch: {left:?} vs {right:?}")]
    MultiplicityMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("{what}: measured {measured:e} exceeds bound {bound:e}")]
    BoundViolated {
        what: String,
        measured: f64,
        bound: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

impl UlamError {
    pub fn precondition(msg: impl Into<String>) -> Self {
        UlamError::Precondition(msg.into())
    }

    pub fn bound(what: impl Into<String>, measured: f64, bound: f64) -> Self {
        UlamError::BoundViolated {
            what: what.into(),
            measured,
            bound,
        }
    }
}
