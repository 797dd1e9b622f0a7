//! Causal representation learning from multi-node interventional data.
//!
//! Latent variables follow a structural causal model over a DAG; each
//! environment hard-intervenes on a subset of them, and only a linear
//! mixture `Z̃ = Z L` is observed. Hard interventions pin variables to
//! constants, so the per-environment variance pattern of the ground-truth
//! latents is sparse while any dense mixture of them is not. The
//! [`disentangler`] learns an unmixing `L̂` by making that variance pattern
//! as sparse as possible.
//!
//! Module map:
//!
//! - [`scm`]: DAGs, mechanisms, ancestral sampling under do-interventions.
//! - [`design`]: environment collections, the coverage condition, and
//!   leave-one-out / separating-system designs.
//! - [`dataset`]: mixing matrices, multi-environment datasets, persistence.
//! - [`disentangler`]: the variance-sparsity objective, its gradient, AdamW
//!   and the training loop.
//! - [`metrics`]: Pearson correlation, MCC via exact assignment, and the
//!   structural disentanglement check.
//! - [`ica`]: a FastICA baseline.
//! - [`experiment`]: seeded experiment grids and CSV reporting.

pub mod dataset;
pub mod design;
pub mod disentangler;
pub mod error;
pub mod experiment;
pub mod ica;
pub mod metrics;
pub mod scm;
pub mod seed;

pub use error::{Error, Result};

/// Numerical zero-variance threshold, relative to the mean squared magnitude
/// of the column under test.
pub const EPS_VAR: f64 = 1e-8;
