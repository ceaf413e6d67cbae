//! Inference on high-dimensional precision matrices from dependent data.
//!
//! The pipeline runs node-wise Lasso regressions, builds a bias-corrected
//! estimate of the precision matrix, estimates the long-run covariance of
//! the entrywise scores with a kernel, and calibrates sup-norm statistics
//! with a kernel-based multiplier bootstrap.

pub mod bootstrap;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod index_set;
pub mod inference;
pub mod longrun;
pub mod nodewise;
pub mod precision;
pub mod rng;
pub mod simulate;
pub mod sym_matrix;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use index_set::IndexSet;
pub use rng::RngSpec;
pub use sym_matrix::SymMatrix;
