//! Counterfactual smoothing of stop-and-go trajectories and the emissions
//! those smoothed trajectories would produce.
//!
//! Pipeline: [`speed_field`] -> [`trajectory`] -> [`smoother`] (on top of
//! the banded [`qp`] solver) -> [`emissions`], orchestrated per day by
//! [`benchmark`] and exposed on the command line by [`cli`].

// Negated comparisons such as `!(x > 0.0)` are how inputs reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod cli;
pub mod emissions;
pub mod error;
mod io_util;
pub mod qp;
pub mod smoother;
pub mod speed_field;
pub mod trajectory;
pub mod units;

pub use error::{Error, Result};
