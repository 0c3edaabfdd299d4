//! Ground-truth camera trajectories.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{PoseSE3, Vec3};

/// Largest rotation allowed between consecutive poses, radians.
pub const MAX_STEP_ROTATION: f64 = 30.0 * core::f64::consts::PI / 180.0;

/// Timestamp of frame `index` at `frame_rate` Hz, nanoseconds.
pub fn frame_timestamp(index: usize, frame_rate: f64) -> u64 {
    (index as f64 * 1e9 / frame_rate).round() as u64
}

/// Time-ordered camera-to-world poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<(u64, PoseSE3)>,
    pub frame_rate: f64,
}

impl Trajectory {
    pub fn new(poses: Vec<(u64, PoseSE3)>, frame_rate: f64) -> Result<Self> {
        for i in 1..poses.len() {
            if poses[i].0 <= poses[i - 1].0 {
                return Err(Error::NotIncreasing {
                    what: "trajectory timestamps",
                    index: i,
                });
            }
            if poses[i].1.angle_to(&poses[i - 1].1) >= MAX_STEP_ROTATION {
                return Err(Error::InvalidConfig {
                    key: "trajectory",
                    reason: "consecutive rotations differ by 30 degrees or more",
                });
            }
        }
        Ok(Self { poses, frame_rate })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn pose(&self, i: usize) -> &PoseSE3 {
        &self.poses[i].1
    }

    pub fn timestamp(&self, i: usize) -> u64 {
        self.poses[i].0
    }
}

/// Smooth orbit around a room center, looking outward and slightly ahead.
/// Starts from rest and accelerates over `ramp` seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitPath {
    pub center: Vec3,
    pub radius_x: f64,
    pub radius_y: f64,
    pub height_amplitude: f64,
    /// Cruise angular speed, rad/s.
    pub angular_speed: f64,
    pub ramp: f64,
    pub start_angle: f64,
    /// Angle by which the gaze leads the position on the orbit.
    pub look_ahead: f64,
    pub look_distance: f64,
    pub look_height: f64,
}

impl Default for OrbitPath {
    fn default() -> Self {
        Self {
            center: Vec3::new(0.0, 0.0, 1.4),
            radius_x: 0.6,
            radius_y: 0.5,
            height_amplitude: 0.1,
            angular_speed: 0.5,
            ramp: 0.5,
            start_angle: 0.3,
            look_ahead: 0.6,
            look_distance: 2.5,
            look_height: -1.2,
        }
    }
}

impl OrbitPath {
    fn phase(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        let travelled = if t < self.ramp {
            t * t / (2.0 * self.ramp)
        } else {
            t - 0.5 * self.ramp
        };
        self.start_angle + self.angular_speed * travelled
    }

    /// Camera pose at time `t` seconds.
    pub fn pose_at(&self, t: f64) -> PoseSE3 {
        let th = self.phase(t);
        let eye = self.center
            + Vec3::new(
                self.radius_x * th.cos(),
                self.radius_y * th.sin(),
                self.height_amplitude * (2.0 * th).sin(),
            );
        let g = th + self.look_ahead;
        let target = self.center
            + Vec3::new(
                self.look_distance * g.cos(),
                self.look_distance * g.sin(),
                self.look_height,
            );
        PoseSE3::look_at(&eye, &target, &Vec3::new(0.0, 0.0, 1.0))
    }

    pub fn sample(&self, frames: usize, frame_rate: f64) -> Result<Trajectory> {
        let poses = (0..frames)
            .map(|i| {
                let ts = frame_timestamp(i, frame_rate);
                (ts, self.pose_at(ts as f64 * 1e-9))
            })
            .collect();
        Trajectory::new(poses, frame_rate)
    }
}
