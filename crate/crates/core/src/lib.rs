// Negated comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod benchmarks;
pub mod canonical;
pub mod cli;
pub mod config;
pub mod error;
pub mod graph;
pub mod oracle;
pub mod planner;
pub mod primitives;

pub use error::{Error, Result};
