//! Feature selection and classification for tabular data.
//!
//! The pipeline: load a delimited dataset, optionally drop features that are
//! statistically independent of the labels (distance-correlation test), expand
//! the survivors into polynomial regressors, and evolve a population of sparse
//! logistic models whose regressor inclusion probabilities concentrate on a
//! small, predictive subset. A one-vs-rest wrapper handles multiclass problems
//! and a stratified cross-validation harness reproduces the standard
//! evaluation protocol.

pub mod classifier;
pub mod dataset;
pub mod dcf;
pub mod error;
pub mod estimator;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod rfsc;
pub(crate) mod seed;

pub use error::{Error, Result};
