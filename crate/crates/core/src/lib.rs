//! Robustness lab for GNNs on directed graphs.
//!
//! The crate implements the full experimental stack for studying targeted
//! evasion attacks on directed graphs:
//!
//! - [`graph`]: directed graph storage in dual CSR/CSC form, symmetrization
//!   and edge-flip perturbations.
//! - [`propagation`]: random-walk and symmetric propagation operators,
//!   including the biased bidirectional random walk (BBRW) that interpolates
//!   between out-link and in-link aggregation with a trust weight `beta`.
//! - [`diff`]: a small tape-based reverse-mode engine over dense `f64`
//!   matrices, enough to differentiate the model forward passes and the
//!   perturbed propagation operators.
//! - [`models`]: MLP / GCN / APPNP backbones parameterized by a propagation
//!   operator, full-batch training with early stopping, grid search and
//!   bit-exact checkpoints.
//! - [`attack`]: the restricted directed graph attack (RDGA): mask
//!   construction, PGD on a continuous edge-flip relaxation with projection
//!   onto the box-plus-budget set, Bernoulli rounding, and transfer /
//!   adaptive drivers.
//! - [`harness`]: experiment orchestration (splits, target sampling, result
//!   tables, beta and masking-rate sweeps, adversary statistics, report
//!   emission).
//!
//! With the default `parallel` feature, data-parallel inner loops (operator
//! rows, independent attacks, grid configurations) run on rayon; row results
//! are bit-identical to the sequential fallback because each unit of work
//! owns its output and summation order is fixed within a row.

pub mod attack;
pub mod data;
pub mod diff;
pub mod error;
pub mod graph;
pub mod harness;
pub mod models;
pub(crate) mod par;
pub mod propagation;
pub mod report;
pub mod sparse;

pub use error::{Error, Result};
