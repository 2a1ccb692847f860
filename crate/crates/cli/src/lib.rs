//! Batch runs over windows, exact computations, samplers and verification
//! batteries. Every run writes into one directory: a snapshot of the
//! effective configuration plus CSV and JSON outputs.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;

pub use args::{Cli, Command};
pub use commands::{run, Outcome};
pub use config::RunConfig;
