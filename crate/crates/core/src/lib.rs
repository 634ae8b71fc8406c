//! Reachability-constrained reinforcement learning.
//!
//! The crate has two halves. [`oracle`] computes feasible sets exactly on
//! low-dimensional grids. [`rac`] trains a deterministic actor, a critic, a
//! safety critic and a statewise multiplier with the reachability constraint
//! (or one of the baseline constraints in [`constraints`]), and the learned
//! feasible set can be checked against the oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod approx;
pub mod config;
pub mod constraints;
pub mod env;
pub mod envs;
pub mod error;
pub mod oracle;
pub mod rac;
pub mod runner;

pub use error::{Error, Result};
