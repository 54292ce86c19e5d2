//! Entropic optimal transport with sharp and regularized Sinkhorn distances.
//!
//! - [`sinkhorn`]: Sinkhorn scaling (linear and log domain) and both distances.
//! - [`grad`]: gradients in the first argument, including the structured solve
//!   behind the sharp-distance gradient.
//! - [`exact`]: exact small-scale transport, used as ground truth.
//! - [`barycenter`]: fixed-support barycenters (iterative Bregman projections and
//!   accelerated projected gradient descent).
//! - [`learning`]: kernel ridge structured prediction with Sinkhorn losses.
//! - [`io`], [`svg`], [`rate`]: file formats, bar charts and the convergence-rate study.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barycenter;
pub mod error;
pub mod exact;
pub mod grad;
pub mod io;
pub mod learning;
pub mod linalg;
pub mod rate;
pub mod simplex;
pub mod sinkhorn;
pub mod svg;

pub use error::{OtError, Result};
pub use simplex::{
    clip_to_interior, cost_from_points, entropy, simplex_project, CostMatrix, Histogram, InteriorHistogram,
    TangentVector, TransportPlan,
};
pub use sinkhorn::{
    regularized_distance, sharp_distance, sinkhorn_solve, DomainMode, DualPotentials, SinkhornConfig, SinkhornSolution,
};
