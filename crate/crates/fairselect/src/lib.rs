//! Statistically fair selection from a candidate pool.
//!
//! An employer receives `K` applications, each described by a feature vector
//! `X` and a binary protected attribute `Z`, and must pick one candidate.
//! Predicted performance is linear, `y = beta' x`.  Ranking purely by
//! predicted performance ("parity of treatment") is probabilistically biased:
//! when subgroup score distributions have unequal spread, the argmax policy
//! excludes the minority group almost entirely as the pool grows.
//!
//! This crate implements the alternative: the *ideal fair policy*, which
//! compares the best candidate of each subgroup against a quantile threshold
//! chosen so that the decision is statistically independent of the vector of
//! protected attributes, together with its finite-sample estimate (OLS
//! coefficients plus an exact empirical quantile computed from per-subgroup
//! score tables).  Baselines (within-subgroup percentile ranking, penalized
//! regressions) and a seeded Monte Carlo experiment harness reproduce the
//! behavior of all policies on synthetic and bootstrapped data.
//!
//! Module map:
//!
//! - [`model`] — data-generating processes, historical datasets, candidate pools
//! - [`estimation`] — OLS, empirical CDFs, and the exact/bootstrap selection quantile
//! - [`policies`] — all selection policies and the penalized-regression benchmarks
//! - [`experiments`] — macro-replication studies and their CSV outputs
//! - [`ingest`] — population CSV parsing and validation
//! - [`config`] — flat `key = value` run configuration files
//! - [`cli`] — command-line front end

pub mod cli;
pub mod config;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod ingest;
pub mod model;
pub mod policies;
pub mod rng;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
