//! Scenario files and command implementations behind the `elc` binary.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{EXIT_CONFIG, EXIT_DIVERGED, EXIT_FAIL, EXIT_PASS};
