//! File formats, configuration, Monte Carlo harness and invariant suites
//! for `starmm-core`. The `starmm` binary exposes all of it.

// NaN must fail these guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod sets;
pub mod suites;

pub use error::{Error, Result};
