//! Synthetic desk-scale worlds: analytic scenes, trajectories, ground-truth
//! rendering and sequence synthesis.

pub mod render;
pub mod scene;
pub mod sequence;
pub mod trajectory;

pub use render::{render_ground_truth, render_view, FramePacket};
pub use scene::{AnalyticScene, Shading, Shape, SurfacePrimitive};
pub use sequence::{synthesize, Calibration, DegradeMode, DegradeParams, Sequence};
pub use trajectory::{OrbitPath, Trajectory};
