//! Dataset IO, file formats, metrics and command implementations for the
//! evslam pipeline.
// NaN-rejecting comparisons and index loops over parallel arrays are intended
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod mesh;
pub mod metrics;

pub use error::{CliError, CliResult};
