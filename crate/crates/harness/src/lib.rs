//! Experiment harness for the cache-placement library: configuration,
//! experiment runners, result files and the invariant suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod validate;
