//! Ground-truth rendering of analytic scenes.

use crate::error::{Error, Result};
use crate::geometry::{PinholeIntrinsics, PoseSE3, Vec3};
use crate::image::{luma, Image};
use crate::world::scene::AnalyticScene;

/// Ground-truth observations at one timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePacket {
    /// RGB camera color, `[0, 1]`.
    pub rgb: Image,
    /// RGB camera z-depth in meters, 0 where invalid.
    pub depth: Image,
    pub timestamp: u64,
    /// Event camera intensity on the `[0, 255]` scale.
    pub intensity: Image,
}

/// Color and z-depth seen by a camera at `pose` (camera-to-world).
pub fn render_view(
    scene: &AnalyticScene,
    pose: &PoseSE3,
    intrinsics: &PinholeIntrinsics,
) -> (Image, Image) {
    let (w, h) = (intrinsics.width, intrinsics.height);
    let mut rgb = Image::new(w, h, 3);
    let mut depth = Image::new(w, h, 1);
    let origin = *pose.translation();
    for v in 0..h {
        for u in 0..w {
            let ray_c = intrinsics.backproject(u as f64, v as f64);
            let range_scale = ray_c.norm();
            let dir = pose.rotate_vector(&(ray_c / range_scale));
            if let Some(hit) = scene.trace(&origin, &dir) {
                let c = scene.shade(&hit);
                let px = rgb.pixel_mut(u, v);
                for k in 0..3 {
                    px[k] = c[k] as f32;
                }
                depth.pixel_mut(u, v)[0] = (hit.t / range_scale) as f32;
            }
        }
    }
    (rgb, depth)
}

/// Event camera intensity, `luma(rgb) * 255`.
pub fn render_intensity(
    scene: &AnalyticScene,
    pose: &PoseSE3,
    intrinsics: &PinholeIntrinsics,
) -> Image {
    let (rgb, _) = render_view(scene, pose, intrinsics);
    intensity_from_rgb(&rgb)
}

pub fn intensity_from_rgb(rgb: &Image) -> Image {
    let mut out = Image::new(rgb.width, rgb.height, 1);
    for (o, px) in out.data.iter_mut().zip(rgb.data.chunks_exact(3)) {
        *o = (luma([px[0] as f64, px[1] as f64, px[2] as f64]) * 255.0) as f32;
    }
    out
}

/// Render both cameras. `t_ec` maps RGB-camera coordinates to event-camera
/// coordinates.
pub fn render_ground_truth(
    scene: &AnalyticScene,
    pose: &PoseSE3,
    timestamp: u64,
    rgb_k: &PinholeIntrinsics,
    event_k: &PinholeIntrinsics,
    t_ec: &PoseSE3,
) -> Result<FramePacket> {
    if !scene.bounds.contains(pose.translation()) {
        return Err(Error::PoseOutsideScene { index: 0 });
    }
    let (rgb, depth) = render_view(scene, pose, rgb_k);
    let event_pose = pose.compose(&t_ec.inverse());
    let intensity = render_intensity(scene, &event_pose, event_k);
    Ok(FramePacket {
        rgb,
        depth,
        timestamp,
        intensity,
    })
}

/// Camera center and world direction of the ray through pixel `(u, v)`,
/// plus the ratio between range and z-depth along it.
pub fn pixel_ray(pose: &PoseSE3, intrinsics: &PinholeIntrinsics, u: f64, v: f64) -> (Vec3, Vec3, f64) {
    let ray_c = intrinsics.backproject(u, v);
    let n = ray_c.norm();
    (*pose.translation(), pose.rotate_vector(&(ray_c / n)), n)
}
