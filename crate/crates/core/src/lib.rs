//! Recovery of a `d × k` point cloud, up to left orthogonal action, from `N`
//! noisy observations `Y_i = Q_i X + σ E_i` with unknown Haar-random `Q_i`.
//!
//! The estimator works through the Gram matrix `XᵀX`, which is invariant
//! under the group action: average the observed Gram matrices, remove the
//! noise bias `dσ²I`, and factor the result at rank `d`.
//!
//! Modules:
//! - [`model`]: cloud and observation synthesis, Haar sampling.
//! - [`metric`]: Procrustes distance, optimal alignment, canonical representatives.
//! - [`estimator`]: Gram mean, debiasing, rank-`d` factorization, noise-level estimation.
//! - [`analysis`]: closed-form stability bounds, error formulas, and their numerical oracles.
//! - [`experiments`]: seeded Monte-Carlo campaigns that write CSV / JSON-lines output.
//! - [`cli`]: the `cloudorbit` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod metric;
pub mod model;

pub use error::{Error, Result};
pub use estimator::{EstimateReport, GramEstimate};
pub use metric::Alignment;
pub use model::{Cloud, ObservationBatch, SeedSpec};
