//! Ellipsoidal trapping regions for quadratic dynamical systems
//! `x' = A x + Q(x) + d` under a generalized lossless constraint.

pub mod certify;
pub mod conic;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod linalg;
pub mod lossless;
pub mod model;
pub mod pipeline;
mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases used by the CLI and most callers.
pub type System = model::QuadraticSystem<f64>;
pub type Shifted = model::ShiftedSystem<f64>;
pub type Structure = lossless::LosslessStructure<f64>;
pub type Certificate = pipeline::EllipsoidCertificate<f64>;
pub type Program = conic::ConicProgram<f64>;
