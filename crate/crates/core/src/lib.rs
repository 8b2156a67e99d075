//! Training-free guided generation for ODE-based (flow-matching) priors,
//! posed as an optimal-control problem on R^d and on SO(3).
//!
//! The prior ODE `x' = f(t, x)` is steered by an additive control term
//! (`x' = f + theta` on R^d, `x' = x (f + theta)` on SO(3)). Controls are
//! optimized by successive approximations: integrate the state forward, run
//! the co-state backward, then move each control toward the maximizer of a
//! proximally regularized Hamiltonian.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod metrics;
pub mod mlp;
pub mod oc_euclidean;
pub mod oc_so3;
pub mod ode;
pub mod oracle;
pub mod report;
pub mod reward;
pub mod so3;
pub mod verify;

pub use error::{Error, Result};
