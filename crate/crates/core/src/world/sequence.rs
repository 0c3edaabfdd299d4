//! Full RGB-D plus event sequences with optional RGB degradation.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::event::{linlog, EventSimulator, EventStream, LogFrame, PixelMemory};
use crate::event::{DEFAULT_LINLOG_B, DEFAULT_THRESHOLD_C};
use crate::geometry::{PinholeIntrinsics, PoseSE3, Vec3};
use crate::image::Image;
use crate::world::render::{render_intensity, render_view, FramePacket};
use crate::world::scene::AnalyticScene;
use crate::world::trajectory::Trajectory;

/// Exposure constant reported for both sensors; only its ratio to the
/// reference exposure enters the model.
pub const DEFAULT_EXPOSURE: f64 = 5.21e-5;

/// Sensor rig description.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    pub rgb: PinholeIntrinsics,
    pub event: PinholeIntrinsics,
    /// Downsampled event plane used for loss transfer between cameras.
    pub mini: PinholeIntrinsics,
    /// Maps RGB-camera coordinates to event-camera coordinates.
    pub t_ec: PoseSE3,
    pub exposure_rgb: f64,
    pub exposure_event: f64,
    pub threshold_c: f64,
    pub linlog_b: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        let event = PinholeIntrinsics::new(110.0, 110.0, 64.0, 48.0, 128, 96);
        // event camera 5 cm to the right of the RGB camera, yawed by 2 degrees
        let yaw = 2.0f64.to_radians();
        let t_ce = PoseSE3::new(
            nalgebra::UnitQuaternion::from_axis_angle(&Vec3::y_axis(), yaw),
            Vec3::new(0.05, 0.0, 0.0),
        );
        Self {
            rgb: PinholeIntrinsics::new(140.0, 140.0, 80.0, 60.0, 160, 120),
            event,
            mini: event.resampled(8, 6),
            t_ec: t_ce.inverse(),
            exposure_rgb: DEFAULT_EXPOSURE,
            exposure_event: DEFAULT_EXPOSURE,
            threshold_c: DEFAULT_THRESHOLD_C,
            linlog_b: DEFAULT_LINLOG_B,
        }
    }
}

impl Calibration {
    /// World pose of the event camera given the RGB camera pose.
    pub fn event_pose(&self, rgb_pose: &PoseSE3) -> PoseSE3 {
        rgb_pose.compose(&self.t_ec.inverse())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DegradeMode {
    Normal,
    Blur,
    Dark,
}

impl DegradeMode {
    pub fn name(&self) -> &'static str {
        match self {
            DegradeMode::Normal => "normal",
            DegradeMode::Blur => "blur",
            DegradeMode::Dark => "dark",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(DegradeMode::Normal),
            "blur" => Some(DegradeMode::Blur),
            "dark" => Some(DegradeMode::Dark),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradeParams {
    /// Sub-frames per inter-frame interval.
    pub k_sub: usize,
    /// Intensity factor of dark mode.
    pub gamma: f64,
}

impl Default for DegradeParams {
    fn default() -> Self {
        Self {
            k_sub: 8,
            gamma: 0.05,
        }
    }
}

/// Synthesized dataset held in memory.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub calib: Calibration,
    pub trajectory: Trajectory,
    pub frames: Vec<FramePacket>,
    pub events: EventStream,
    pub mode: DegradeMode,
}

/// Scale by `gamma` and quantize to 8 bits.
pub fn darken(rgb: &Image, gamma: f64) -> Result<Image> {
    if !(gamma > 0.0) {
        return Err(Error::Domain {
            op: "dark factor gamma",
            value: gamma,
        });
    }
    let mut out = rgb.clone();
    for c in out.data.iter_mut() {
        let q = (*c as f64 * gamma * 255.0).round().clamp(0.0, 255.0);
        *c = (q / 255.0) as f32;
    }
    Ok(out)
}

/// Average of renders at the given poses. Depth is averaged only where
/// every sub-render is valid; elsewhere it is 0.
pub fn blur_average(
    scene: &AnalyticScene,
    poses: &[PoseSE3],
    intrinsics: &PinholeIntrinsics,
) -> (Image, Image) {
    let (w, h) = (intrinsics.width, intrinsics.height);
    let mut rgb_acc = alloc::vec![0.0f64; w * h * 3];
    let mut depth_acc = alloc::vec![0.0f64; w * h];
    let mut valid = alloc::vec![true; w * h];
    for pose in poses {
        let (rgb, depth) = render_view(scene, pose, intrinsics);
        for (a, &c) in rgb_acc.iter_mut().zip(&rgb.data) {
            *a += c as f64;
        }
        for i in 0..w * h {
            let z = depth.data[i];
            if z > 0.0 {
                depth_acc[i] += z as f64;
            } else {
                valid[i] = false;
            }
        }
    }
    let n = poses.len() as f64;
    let rgb = Image::from_data(w, h, 3, rgb_acc.iter().map(|&a| (a / n) as f32).collect());
    let depth = Image::from_data(
        w,
        h,
        1,
        (0..w * h)
            .map(|i| if valid[i] { (depth_acc[i] / n) as f32 } else { 0.0 })
            .collect(),
    );
    (rgb, depth)
}

/// Sub-frame poses and timestamps in `(t_{i-1}, t_i]`, the last one being
/// frame `i` itself.
pub fn sub_frames(traj: &Trajectory, i: usize, k_sub: usize) -> Vec<(u64, PoseSE3)> {
    if i == 0 {
        return alloc::vec![traj.poses[0]];
    }
    let (t0, p0) = traj.poses[i - 1];
    let (t1, p1) = traj.poses[i];
    (1..=k_sub)
        .map(|k| {
            if k == k_sub {
                return (t1, p1);
            }
            let s = k as f64 / k_sub as f64;
            let t = t0 + ((t1 - t0) as f64 * s).round() as u64;
            (t, p0.interpolate(&p1, s))
        })
        .collect()
}

fn log_levels(intensity: &Image, b: f64) -> Result<Vec<f64>> {
    intensity.data.iter().map(|&i| linlog(i as f64, b)).collect()
}

/// Render every frame, degrade the RGB stream, and simulate events from
/// undegraded event-camera sub-frames.
pub fn synthesize(
    scene: &AnalyticScene,
    trajectory: &Trajectory,
    calib: &Calibration,
    mode: DegradeMode,
    params: &DegradeParams,
) -> Result<Sequence> {
    if params.k_sub == 0 {
        return Err(Error::InvalidConfig {
            key: "k_sub",
            reason: "must be at least 1",
        });
    }
    if !(params.gamma > 0.0) {
        return Err(Error::Domain {
            op: "dark factor gamma",
            value: params.gamma,
        });
    }
    for (index, (_, pose)) in trajectory.poses.iter().enumerate() {
        if !scene.is_free(pose.translation(), 0.0)
            || !scene.is_free(calib.event_pose(pose).translation(), 0.0)
        {
            return Err(Error::PoseOutsideScene { index });
        }
    }
    let ek = &calib.event;
    let mut sim: Option<EventSimulator> = None;
    let mut records = Vec::new();
    let mut frames = Vec::with_capacity(trajectory.len());
    for i in 0..trajectory.len() {
        let (t, pose) = trajectory.poses[i];
        let subs = sub_frames(trajectory, i, params.k_sub);
        let mut intensity = None;
        for (j, (ts, sp)) in subs.iter().enumerate() {
            let img = render_intensity(scene, &calib.event_pose(sp), ek);
            let levels = log_levels(&img, calib.linlog_b)?;
            let frame = LogFrame { t: *ts, levels };
            match sim.as_mut() {
                None => {
                    let memory = PixelMemory::from_levels(ek.width, ek.height, &frame.levels, *ts)?;
                    let mut s = EventSimulator::new(calib.threshold_c, memory)?;
                    s.push_frame(frame, &mut records)?;
                    sim = Some(s);
                }
                Some(s) => s.push_frame(frame, &mut records)?,
            }
            if j + 1 == subs.len() {
                intensity = Some(img);
            }
        }
        let (rgb, depth) = match mode {
            DegradeMode::Normal => render_view(scene, &pose, &calib.rgb),
            DegradeMode::Dark => {
                let (rgb, depth) = render_view(scene, &pose, &calib.rgb);
                (darken(&rgb, params.gamma)?, depth)
            }
            DegradeMode::Blur => {
                let poses: Vec<PoseSE3> = subs.iter().map(|s| s.1).collect();
                blur_average(scene, &poses, &calib.rgb)
            }
        };
        frames.push(FramePacket {
            rgb,
            depth,
            timestamp: t,
            intensity: intensity.expect("at least one sub-frame"),
        });
    }
    let events = EventStream::new(
        records,
        ek.width,
        ek.height,
        calib.threshold_c,
        calib.linlog_b,
    )?;
    let mut calib = *calib;
    if mode == DegradeMode::Dark {
        calib.exposure_rgb *= params.gamma;
    }
    Ok(Sequence {
        calib,
        trajectory: trajectory.clone(),
        frames,
        events,
        mode,
    })
}
