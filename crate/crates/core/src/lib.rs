//! AC power flow / optimal power flow oracles, grid perturbation datasets and
//! safety metrics for learned grid solvers.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cli;
pub mod embed;
pub mod error;
pub mod eval;
pub mod grid;
pub mod opf;
pub mod perturb;
pub mod powerflow;
pub mod sparse;

pub use error::{Error, Result};
