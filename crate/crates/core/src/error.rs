use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {theta} is outside the likelihood domain ({lo}, {hi})")]
    Domain { theta: f64, lo: f64, hi: f64 },

    #[error("non-finite likelihood at parameter {theta}")]
    NonFiniteLikelihood { theta: f64 },

    #[error("likelihood at {theta} exceeds the value at the declared MLE by {excess:.3e}; MLE is mis-specified")]
    MisSpecifiedMle { theta: f64, excess: f64 },

    #[error("z = {target} is unreachable inside the domain; achievable extreme is {achievable}")]
    Unreachable { target: f64, achievable: f64 },

    #[error("likelihood is flat at the optimum (curvature {curvature})")]
    FlatLikelihood { curvature: f64 },

    #[error("density has zero total mass over the grid")]
    DegenerateDensity,

    #[error("grid point {theta} lies on or beyond the domain boundary")]
    Endpoint { theta: f64 },

    #[error("prior rule {0} is not defined for this model")]
    UnsupportedPrior(String),

    #[error("log-likelihood is not log-concave on [{lo}, {hi}] (curvature {curvature})")]
    NonLogConcave { lo: f64, hi: f64, curvature: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input contains a non-finite value at position {0}")]
    NonFiniteInput(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite gradient component {index} during optimisation")]
    NonFiniteGradient { index: usize },

    #[error("optimisation diverged after {evals} evaluations (cost {cost})")]
    Divergence { evals: usize, cost: f64, trace: Vec<f64> },

    #[error("age {age} does not exceed onset age {onset}; subject cannot be age corrected")]
    AgeCorrection { age: f64, onset: f64 },

    #[error("model is not fully optimised (gradient max-norm {grad_max:.3e}); uncertainty cannot be assessed")]
    NotOptimised { grad_max: f64 },

    #[error("weight {weight}: cost is flat out to displacement {reached:.3e}; parameter is unconstrained")]
    Unconstrained { weight: usize, reached: f64 },

    #[error("weight {weight}: no scale found within the evaluation budget (last step {last})")]
    ScaleNotFound { weight: usize, last: f64 },

    #[error("weight {weight}: cost falls below the optimum at displacement {offset} (change {change}); start point is not a minimum")]
    NotAtMinimum { weight: usize, offset: f64, change: f64 },

    #[error("weight {weight}: non-monotone probe sequence {probes:?}")]
    NonMonotoneProbes { weight: usize, probes: Vec<(f64, f64)> },

    #[error("non-finite cost while probing weights {w} and {v}")]
    NonFiniteCost { w: usize, v: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("acceptance rate {rate:.4} over {proposals} proposals is below 1%; reduce the step size")]
    StepSize { rate: f64, proposals: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("remap file was built for model {expected}, not {got}")]
    ModelMismatch { expected: String, got: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), message: message.into() }
    }
}
