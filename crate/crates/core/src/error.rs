use thiserror::Error;

use crate::mesh::WaveVector;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate triangle (signed area {0:e})")]
    DegenerateTriangle(f64),

    #[error("unknown element id {0}")]
    UnknownElement(usize),

    #[error("point ({}, {}) lies outside the domain", .0.k1, .0.k2)]
    OutOfDomain(WaveVector),

    #[error("polynomial space is empty: {0}")]
    EmptySpace(String),

    #[error("singular collocation system: {0}")]
    Singular(String),

    #[error("inconsistent boundary data: {0}")]
    Conformity(String),

    #[error("band values are not sorted ascending")]
    Unsorted,

    #[error("band provider failed at k = ({}, {}): {msg}", .k.k1, .k.k2)]
    Provider { k: WaveVector, msg: String },

    #[error("group velocity is undefined where the frequency vanishes")]
    SingularPoint,

    #[error("discretization error: {0}")]
    Discretization(String),

    #[error("node optimisation failed: {0}")]
    Optimizer(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
