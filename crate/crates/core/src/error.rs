use thiserror::Error;

use crate::half::HalfInt;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cluster: {0}")]
    InvalidCluster(String),

    #[error("sector M={m} is empty for this cluster (S_max={s_max})")]
    EmptySector { m: HalfInt, s_max: HalfInt },

    #[error("sector M={m} has {dimension} states, above the configured cap of {cap}")]
    BudgetExceeded { m: HalfInt, dimension: u128, cap: u64 },

    #[error("basis does not belong to this cluster")]
    BasisMismatch,

    #[error("operator {component} on site {site} cannot map sector M={from} to M={to}")]
    SectorMismatch {
        site: usize,
        component: &'static str,
        from: HalfInt,
        to: HalfInt,
    },

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("operator requires complex amplitudes")]
    RequiresComplex,

    #[error("eigensolver did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("degenerate sector bottom with indistinguishable <S^2> values: {0:?}")]
    AmbiguousMultiplet(Vec<f64>),

    #[error("invalid superposition: {0}")]
    InvalidSuperposition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("subset dimension {dimension} exceeds the cap of {cap}")]
    SubsetTooLarge { dimension: u128, cap: usize },

    #[error("no partition satisfies P > 1 - delta (full-cluster P = {full_cluster_probability})")]
    Infeasible { full_cluster_probability: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown model key: {0}")]
    UnknownModel(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
