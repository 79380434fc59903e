//! Gaussian additive mixed models with penalized smooths, factor smooths,
//! random effects and AR(1) errors, plus residual autocorrelation tools.

pub mod basis;
pub mod dataio;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod formula;
pub mod inference;
pub mod linalg;
pub mod simlab;

pub use error::{GammError, Result};
