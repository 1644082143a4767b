use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("no sign change on [{lo}, {hi}] (f = {f_lo}, {f_hi})")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("probability {0} outside the admissible domain")]
    Domain(f64),
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
    #[error("tabulated grid is not strictly increasing at index {0}")]
    NonMonotone(usize),
    #[error("utility is not increasing and concave near x = {0}")]
    NotConcave(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("type {alpha} lies below the bidding threshold {threshold}")]
    BelowThreshold { alpha: f64, threshold: f64 },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("entry cost {cost} has no threshold in (0, 1) for N = {n}")]
    NoThreshold { cost: f64, n: u32 },
    #[error("virtual value is not increasing at {count} grid points (first at {first})")]
    Irregular { count: usize, first: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmpiricsError {
    #[error("empirical quantile needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("dataset does not carry the observable `{0}`")]
    MissingObservable(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdentificationError {
    #[error("not identified ({proposition}): {reason}")]
    NotIdentified { proposition: String, reason: String },
    #[error("data inconsistent with the model: {0}")]
    Inconsistent(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Empirics(#[from] EmpiricsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed dataset: {0}")]
    Format(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("empty sample")]
    EmptySample,
    #[error("invalid twin parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Empirics(#[from] EmpiricsError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}
