//! Library half of the `cylevy` binary: config parsing, the scenario registry and
//! the subcommand runners. Integration and acceptance tests link against this crate
//! to drive the same code paths the binary uses.

// Validations are written `!(x > 0)` rather than `x <= 0` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod runner;
pub mod scenarios;
