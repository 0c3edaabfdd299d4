//! File formats of datasets, runs and evaluation artifacts.

pub mod calib;
pub mod checkpoint;
pub mod evs;
pub mod losslog;
pub mod pfm;
pub mod ply;
pub mod scene;
pub mod tum;
