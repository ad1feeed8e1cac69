//! Benchmark driver for `fracmg-core`: run configuration, the on-disk
//! generator cache and table/timing output. The `fracmg` binary is a thin
//! command-line layer over this library.

pub mod bench;
pub mod cache;
pub mod config;
pub mod error;

pub use error::{CliError, Result};
