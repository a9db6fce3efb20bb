//! Error types shared across the solver toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix not symmetric: max asymmetry {asymmetry:.3e} exceeds {tolerance:.3e}")]
    Asymmetry { asymmetry: f64, tolerance: f64 },

    #[error("non-finite value at grid node {node} (t = {time})")]
    NonFinite { node: usize, time: f64 },

    #[error("solver breakdown at grid node {node} (t = {time}): {what}")]
    Breakdown { node: usize, time: f64, what: String },

    #[error("fixed-point iteration diverged after {iterations} iterations (residual {residual:.3e})")]
    Divergence { iterations: usize, residual: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("scenario parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("refusing slope fit: {0}")]
    FitRefused(String),

    #[error("saddle point does not exist: {0}")]
    Saddle(String),

    #[error("inner problem unbounded at node {node} (layer {layer})")]
    InnerUnbounded { layer: usize, node: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
