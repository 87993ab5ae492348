use thiserror::Error;

use crate::conic::ConicError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite entry in {0}")]
    NonFinite(String),
    #[error("Q[{index}] is asymmetric by {asymmetry:e} (tolerance {tolerance:e})")]
    Asymmetric {
        index: usize,
        asymmetry: f64,
        tolerance: f64,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    /// The method cannot be applied to this system at all (for instance no
    /// generalized-lossless matrix exists).
    #[error("method inapplicable: {0}")]
    Inapplicable(String),
    #[error("trajectory diverged from x0 = {x0:?} at t = {time}")]
    Diverged { x0: Vec<f64>, time: f64 },
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
