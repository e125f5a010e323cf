//! Two-stage recommendation engine.
//!
//! Stage 1 generates candidates with correlated cross-occurrence (log-likelihood
//! ratio similarity over primary and secondary indicator events). Stage 2 ranks
//! them with a click-through-rate model (logistic regression or AutoInt)
//! trained centrally or with simulated federated averaging.
//!
//! The numerical kernels are generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix `f64`, which is what every experiment pipeline uses.

pub mod cco;
pub mod ctr;
pub mod data;
pub mod error;
pub mod experiments;
pub mod features;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = nn::Tensor<f64>;
pub type ParameterSet = nn::ParameterSet<f64>;
pub type TruncatedSvd = federation::TruncatedSvd<f64>;
pub type FederatedOutcome = federation::FederatedOutcome<f64>;
