//! Minimax estimation for one-parameter exponential families whose natural
//! parameter is constrained to a star-shaped set inside a box `[-M, M]^n`.
//!
//! The crate is `no_std` (it needs `alloc`) and holds only the numerical core:
//!
//! - [`expfam`]: Bernoulli and unit-variance Gaussian families, exact KL
//!   divergence, curvature constants and the sub-exponential MGF check.
//! - [`geometry`]: star-shaped constraint sets as membership oracles with a
//!   finite candidate cloud, greedy maximal packings, local entropy estimates
//!   and the `ε*` solver.
//! - [`tree`]: the leveled packing tree with per-level pruning and its
//!   structural invariant checker.
//! - [`estimator`]: likelihood domination, H-scores, the `J*` stopping rule and
//!   the data-driven tree traversal.
//! - [`bounds`]: Fano lower bound, minimax rate report and the analytic local
//!   entropy formulas for monotone functions on a lattice.
//!
//! IO, file formats, the Monte Carlo harness and the CLI live in the `starmm`
//! crate.

// NaN must fail these guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bounds;
pub mod cloud;
pub mod error;
pub mod estimator;
pub mod expfam;
pub mod geometry;
pub mod tree;
mod vecmath;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use vecmath::{dist, dist2, lex_cmp};
