//! Simulator for communication-compressed distributed optimization that
//! exploits matrix smoothness.
//!
//! The library is organized around a few pieces:
//!
//! - [`psd`]: positive-semidefinite matrix machinery (spectral factorization,
//!   matrix square roots and pseudo-inverse square roots, range projections).
//! - [`sampling`]: coordinate samplings, their probability matrices, random
//!   diagonal sketches, and the importance-sampling probability solvers.
//! - [`compress`]: the matrix-smoothness-aware compress/decompress pair, the
//!   plain sparsifier baseline, and sparse wire messages with communication
//!   accounting.
//! - [`problem`]: regularized logistic regression over partitioned data,
//!   LibSVM ingestion, smoothness matrices from data, and a high-accuracy
//!   reference solver.
//! - [`constants`]: every constant appearing in the step-size rules (expected
//!   smoothness, compression variance, ESO parameters) and the per-method
//!   theory parameters.
//! - [`optim`]: the method family (SkGD, `NSync, CGD+ single node; DCGD/DCGD+,
//!   DIANA/DIANA+, ADIANA/ADIANA+, ISEGA+, DIANA++ distributed) as
//!   deterministic simulated server/node loops with per-iteration traces.
//! - [`sketch_bounds`]: linear-sketch lower-bound toolkit (optimal decoders,
//!   rotated sparsifiers, the variance-vs-rank trade-off audit).

pub mod compress;
pub mod constants;
pub mod error;
pub mod optim;
pub mod problem;
pub mod psd;
pub mod sampling;
pub mod sketch_bounds;

pub use error::{Error, Result};

/// Dense column vector of `f64`, the working vector type throughout.
pub type Vector = nalgebra::DVector<f64>;
/// Dense square/rectangular matrix of `f64`.
pub type Matrix = nalgebra::DMatrix<f64>;
