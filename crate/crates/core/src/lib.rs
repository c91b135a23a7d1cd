//! Quantum state/measurement primitives, freedom counting, a precedent ledger
//! and precedence dynamics, with the studies and run configuration built on them.

// NaN-rejecting checks are written as `!(x >= 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod freedom;
pub mod ledger;
pub mod qcore;
pub mod runner;

pub use error::{Error, Result};
