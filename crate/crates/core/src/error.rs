use std::path::PathBuf;

use thiserror::Error;

use crate::vbayes::EmFit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dictionary pruning removed every word")]
    EmptyDictionary,

    #[error("leaves occur at different depths: {first_leaf:?} at level {first_depth}, {other_leaf:?} at level {other_depth}")]
    NonUniformDepth {
        first_leaf: String,
        first_depth: usize,
        other_leaf: String,
        other_depth: usize,
    },

    #[error("duplicate name {name:?} among the children of {parent:?}")]
    DuplicateName { parent: String, name: String },

    #[error("{what} out of range: {value} (limit {limit})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("unknown leaf {0:?}")]
    UnknownLeaf(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("cluster at level {level}, index {index} ({name:?}) has no member documents")]
    EmptyCluster {
        level: usize,
        index: usize,
        name: String,
    },

    #[error("quadratic program did not converge (KKT residual {residual:e})")]
    QpNotConverged { residual: f64 },

    #[error("precision matrix of leaf {leaf} is not symmetric positive definite")]
    SingularPrecision { leaf: usize },

    #[error("variational EM did not converge after {} iterations (last change {:e})", .0.iterations, .0.last_change)]
    NotConverged(Box<EmFit>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("format error in {path:?}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
