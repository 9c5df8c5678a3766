//! Logistic multidimensional unfolding for multivariate binary data.

pub mod baseline_rrr;
pub mod cli;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod geometry;
pub(crate) mod linalg;
pub mod majorization;
pub mod montecarlo;
pub mod render;
pub mod selection;
pub mod unfolding;

pub use error::{LmduError, Result};
