#![cfg_attr(not(any(test, feature = "std")), no_std)]
// NaN-rejecting comparisons and index loops over parallel arrays are intended
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
//! Core of an event-assisted implicit RGB-D SLAM system.

extern crate alloc;

pub mod diff;
pub mod error;
pub mod field;
pub mod event;
pub mod geometry;
pub mod image;
pub mod render;
pub mod slam;
pub mod world;

pub use error::{Error, Result};
