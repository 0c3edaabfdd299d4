//! Tracking and mapping: losses, partner selection, ray sampling, the
//! batch objective, and the optimization loop.

pub mod losses;
pub mod objective;
pub mod optim;
pub mod pipeline;
pub mod sampling;
pub mod table;

pub use losses::EventLossMode;
pub use objective::{Batch, EventRay, LossTerms, LossWeights, Objective, PoseGrad, PoseVar, RgbRay};
pub use pipeline::{warp_depth, FrameLog, FrameObs, Slam, SlamConfig, SlamOutput};
pub use table::{forward_query, PrevIndexTable};
