//! Differentiable per-ray rendering with bell-shaped TSDF weights.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::diff::sigmoid;
use crate::error::{Error, Result};
use crate::field::{FieldSample, FieldScratch, SampleGrad, SceneField};
use crate::geometry::{PinholeIntrinsics, PoseSE3, Vec3};

/// Raw weight sum below which a ray is treated as missing the surface.
pub const SURFACE_WEIGHT_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CameraId {
    Rgbd,
    Event,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit world direction.
    pub dir: Vec3,
    pub pixel: (f64, f64),
    pub camera: CameraId,
    /// Range along the ray per unit of z-depth.
    pub range_scale: f64,
}

/// World ray through pixel center `(u, v)` of a camera at `pose`.
pub fn camera_ray(pose: &PoseSE3, intrinsics: &PinholeIntrinsics, u: f64, v: f64, camera: CameraId) -> Ray {
    let c = intrinsics.backproject(u, v);
    let n = c.norm();
    Ray {
        origin: *pose.translation(),
        dir: pose.rotate_vector(&(c / n)),
        pixel: (u, v),
        camera,
        range_scale: n,
    }
}

/// World rays through pixel centers of a camera at `pose`.
pub fn make_rays(
    pose: &PoseSE3,
    intrinsics: &PinholeIntrinsics,
    pixels: &[(f64, f64)],
    camera: CameraId,
) -> Vec<Ray> {
    pixels
        .iter()
        .map(|&(u, v)| camera_ray(pose, intrinsics, u, v, camera))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    pub m_strat: usize,
    pub m_surf: usize,
    pub near: f64,
    pub far: f64,
    /// Truncation distance, meters.
    pub tr: f64,
}

impl SamplingConfig {
    pub fn new(far: f64) -> Self {
        Self {
            m_strat: 24,
            m_surf: 8,
            near: 0.05,
            far,
            tr: 0.05,
        }
    }
}

/// Stratified depths over `[near, far]`, plus uniform depths within `tr` of
/// `sensor_range` when it is given, merged in ascending order.
pub fn sample_ray<R: Rng + ?Sized>(
    sensor_range: Option<f64>,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(cfg.near < cfg.far) {
        return Err(Error::Domain {
            op: "sample_ray near >= far",
            value: cfg.near,
        });
    }
    if !(cfg.tr > 0.0) {
        return Err(Error::Domain {
            op: "sample_ray truncation",
            value: cfg.tr,
        });
    }
    let mut z = Vec::with_capacity(cfg.m_strat + cfg.m_surf);
    let bin = (cfg.far - cfg.near) / cfg.m_strat as f64;
    for i in 0..cfg.m_strat {
        z.push(cfg.near + bin * (i as f64 + rng.gen::<f64>()));
    }
    if let Some(d) = sensor_range.filter(|d| *d > 0.0) {
        for _ in 0..cfg.m_surf {
            z.push(d - cfg.tr + 2.0 * cfg.tr * rng.gen::<f64>());
        }
    }
    z.sort_by(|a, b| a.total_cmp(b));
    Ok(z)
}

/// Bell-shaped weight `sigmoid(s / tr) * sigmoid(-s / tr)`.
#[inline]
pub fn bell_weight(s: f64, tr: f64) -> f64 {
    sigmoid(s / tr) * sigmoid(-s / tr)
}

/// Composited values of one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderBundle {
    pub color: [f64; 3],
    pub lum: f64,
    /// Range along the ray, meters.
    pub depth: f64,
    /// Normalized weights.
    pub weights: Vec<f64>,
    pub raw_weight_sum: f64,
    /// Samples from this index on lie behind the first surface and carry no
    /// weight.
    pub cutoff: usize,
}

impl RenderBundle {
    /// Whether any sample carries weight; rays that fail this are left out
    /// of the depth loss.
    pub fn is_surface(&self) -> bool {
        self.raw_weight_sum >= SURFACE_WEIGHT_EPS
    }
}

/// End of the visible part of a ray: past the first outside-to-inside
/// zero crossing, samples more than `tr` behind it are occluded. The sample
/// right after the crossing is always kept.
pub fn visible_cutoff(z: &[f64], s: impl Fn(usize) -> f64, tr: f64) -> usize {
    let m = z.len();
    for i in 0..m.saturating_sub(1) {
        let (s0, s1) = (s(i), s(i + 1));
        if s0 > 0.0 && s1 <= 0.0 {
            let zc = z[i] + (z[i + 1] - z[i]) * s0 / (s0 - s1);
            let mut end = i + 2;
            while end < m && z[end] <= zc + tr {
                end += 1;
            }
            return end;
        }
    }
    m
}

/// Normalized composition of per-sample values at ascending depths `z`.
pub fn compose(z: &[f64], samples: &[FieldSample], tr: f64) -> RenderBundle {
    let cutoff = visible_cutoff(z, |i| samples[i].s, tr);
    let mut weights: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| if i < cutoff { bell_weight(s.s, tr) } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut b = RenderBundle {
        color: [0.0; 3],
        lum: 0.0,
        depth: 0.0,
        weights: Vec::new(),
        raw_weight_sum: total,
        cutoff,
    };
    for w in weights.iter_mut() {
        *w /= total;
    }
    for ((w, s), zi) in weights.iter().zip(samples).zip(z) {
        for k in 0..3 {
            b.color[k] += w * s.color[k];
        }
        b.lum += w * s.lum;
        b.depth += w * zi;
    }
    b.weights = weights;
    b
}

/// Forward rendering through any point function (used for oracle fields).
pub fn render_with<F: FnMut(&Vec3) -> FieldSample>(ray: &Ray, z: &[f64], tr: f64, mut f: F) -> RenderBundle {
    let samples: Vec<FieldSample> = z.iter().map(|zi| f(&(ray.origin + ray.dir * *zi))).collect();
    compose(z, &samples, tr)
}

/// Gradient of a scalar loss with respect to a [`RenderBundle`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BundleGrad {
    pub color: [f64; 3],
    pub lum: f64,
    pub depth: f64,
}

/// Gradient with respect to a rigid motion of all sample points of a ray:
/// `trans` is the sum of point gradients, `rot` the sum of
/// `(x - origin) x g` about the ray origin.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RayPoseGrad {
    pub trans: Vec3,
    pub rot: Vec3,
}

impl RayPoseGrad {
    /// Moment about `pivot` instead of the ray origin.
    pub fn rot_about(&self, origin: &Vec3, pivot: &Vec3) -> Vec3 {
        self.rot + (origin - pivot).cross(&self.trans)
    }
}

/// Per-ray cache of field scratches and sample values.
#[derive(Clone, Debug, Default)]
pub struct RayScratch {
    pub z: Vec<f64>,
    pub samples: Vec<FieldSample>,
    field: Vec<FieldScratch>,
    raw: Vec<f64>,
}

impl RayScratch {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Render `ray` at depths `z` through the learned field, keeping the state
/// needed by [`backward_field`].
pub fn render_field(
    field: &SceneField,
    params: &[f64],
    ray: &Ray,
    z: &[f64],
    tr: f64,
    rs: &mut RayScratch,
) -> RenderBundle {
    while rs.field.len() < z.len() {
        rs.field.push(field.scratch());
    }
    rs.z.clear();
    rs.z.extend_from_slice(z);
    rs.samples.clear();
    for (zi, sc) in z.iter().zip(rs.field.iter_mut()) {
        let x = ray.origin + ray.dir * *zi;
        rs.samples.push(field.forward(params, &x, sc));
    }
    compose(z, &rs.samples, tr)
}

/// Backward of the last [`render_field`] call held in `rs`.
///
/// `g_s` adds direct per-sample TSDF gradients (from the SDF losses).
/// Field parameter gradients accumulate into `grad`; the rigid-motion
/// gradient of the sample points accumulates into `pose`.
#[allow(clippy::too_many_arguments)]
pub fn backward_field(
    field: &SceneField,
    params: &[f64],
    ray: &Ray,
    tr: f64,
    rs: &mut RayScratch,
    bundle: &RenderBundle,
    g: &BundleGrad,
    g_s: Option<&[f64]>,
    mut grad: Option<&mut [f64]>,
    mut pose: Option<&mut RayPoseGrad>,
) {
    let m = rs.samples.len();
    rs.raw.clear();
    let mut abar = 0.0;
    for i in 0..m {
        let s = &rs.samples[i];
        let a = g.color[0] * s.color[0]
            + g.color[1] * s.color[1]
            + g.color[2] * s.color[2]
            + g.lum * s.lum
            + g.depth * rs.z[i];
        rs.raw.push(a);
        abar += bundle.weights[i] * a;
    }
    let total = bundle.raw_weight_sum;
    for i in 0..m {
        let s = rs.samples[i].s;
        let sg = sigmoid(s / tr);
        let w = sg * (1.0 - sg);
        // d w / d s = w (1 - 2 sigmoid(s / tr)) / tr
        let mut gs = if i < bundle.cutoff {
            (rs.raw[i] - abar) / total * w * (1.0 - 2.0 * sg) / tr
        } else {
            0.0
        };
        if let Some(extra) = g_s {
            gs += extra[i];
        }
        let wi = bundle.weights[i];
        let sample_grad = SampleGrad {
            s: gs,
            color: [wi * g.color[0], wi * g.color[1], wi * g.color[2]],
            lum: wi * g.lum,
        };
        let mut gx = Vec3::zeros();
        let want_x = pose.is_some();
        field.backward(
            params,
            &mut rs.field[i],
            &sample_grad,
            grad.as_deref_mut(),
            if want_x { Some(&mut gx) } else { None },
        );
        if let Some(p) = pose.as_deref_mut() {
            p.trans += gx;
            p.rot += (ray.dir * rs.z[i]).cross(&gx);
        }
    }
}

/// First outside-to-inside zero crossing of the field TSDF along the ray,
/// from `n` evenly spaced evaluations over `[near, far]`.
pub fn surface_guess(
    field: &SceneField,
    params: &[f64],
    ray: &Ray,
    cfg: &SamplingConfig,
    n: usize,
    sc: &mut FieldScratch,
) -> Option<f64> {
    let step = (cfg.far - cfg.near) / n as f64;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..n {
        let z = cfg.near + step * (i as f64 + 0.5);
        let s = field.sdf(params, &(ray.origin + ray.dir * z), sc);
        if let Some((z0, s0)) = prev {
            if s0 > 0.0 && s <= 0.0 {
                return Some(z0 + (z - z0) * s0 / (s0 - s));
            }
        }
        prev = Some((z, s));
    }
    None
}
