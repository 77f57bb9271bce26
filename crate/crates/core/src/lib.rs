//! Simulation, kriging and linear extrapolation of stable random fields.
//!
//! Modules, bottom up: [`stable`] laws, [`measure`] spaces and stable
//! integrals, [`covariance`]/[`variogram`] models, [`simulate`] fields,
//! [`kriging`] and the stable predictors in [`extrap`].

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod error;
pub mod extrap;
pub mod grid;
pub mod kriging;
pub mod linalg;
pub mod measure;
pub mod optim;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod stable;
pub mod variogram;

pub use error::{Error, Result};
