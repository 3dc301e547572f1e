//! Global optimization of acquisition functions built on gradient-boosted
//! regression tree surrogates.
//!
//! The crate is organised bottom-up:
//!
//! - [`tree`]: ensembles, training, the interval grid induced by the split
//!   thresholds, and box-restricted prediction bounds.
//! - [`uncertainty`]: datasets, standardization, distance-based uncertainty,
//!   k-means reference sets and distance bounds over boxes.
//! - [`solver`]: acquisition problems, the branch-and-bound solver and the
//!   LP-format exporter.
//! - [`bo`]: the sequential optimization loop, the random-sampling baseline and
//!   the uncertainty study.
//! - [`benchmarks`]: synthetic test functions.
//! - [`cli`]: command implementations used by the `gbtopt` binary.

pub mod benchmarks;
pub mod bo;
pub mod cli;
pub mod error;
pub mod solver;
pub mod tree;
pub mod uncertainty;

pub use error::{Error, Result};
