use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("point {point:?} is off the sphere (|x - center| = {norm}, radius = {radius})")]
    OffSphere { point: Vec<f64>, norm: f64, radius: f64 },

    #[error("degenerate hull: {0}; resample the boundary")]
    DegenerateHull(String),

    #[error("mesh has no faces; triangulate it first")]
    NotTriangulated,

    #[error("empty box: {0}")]
    EmptyBox(&'static str),

    #[error("non-finite evaluation at x = {x:?}: {what}")]
    NonFinite { x: Vec<f64>, what: String },

    #[error("QP infeasible at x = {x:?}")]
    QpInfeasible { x: Vec<f64> },

    #[error("{0} vulnerable-input subsets exceed the cap of {1}; pass an explicit subset list")]
    SubsetCap(usize, usize),

    #[error("result is not certified")]
    NotCertified,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
