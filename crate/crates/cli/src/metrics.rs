//! Trajectory, depth and mesh metrics.

use evslam_core::geometry::{Mat3, PinholeIntrinsics, PoseSE3, Vec3};
use evslam_core::image::Image;
use evslam_core::render::{camera_ray, CameraId, Ray};
use evslam_core::world::{AnalyticScene, Shape};
use nalgebra::Matrix3;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::mesh::{Mesh, MeshDistance};

/// Completion-ratio threshold, meters.
pub const COMPLETION_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alignment {
    /// Rotation and translation.
    Se3,
    /// Rotation, translation and uniform scale.
    Sim3,
}

impl Alignment {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "se3" => Some(Alignment::Se3),
            "sim3" => Some(Alignment::Sim3),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Alignment::Se3 => "se3",
            Alignment::Sim3 => "sim3",
        }
    }
}

/// Similarity `x -> scale * rotation * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
}

impl Similarity {
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x * self.scale + self.translation
    }
}

/// Least-squares similarity mapping `src` onto `dst` (Umeyama 1991).
pub fn umeyama(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<Similarity, String> {
    let n = src.len();
    if n != dst.len() || n < 3 {
        return Err(format!("need at least 3 point pairs, found {n}"));
    }
    let mu_s = src.iter().sum::<Vec3>() / n as f64;
    let mu_d = dst.iter().sum::<Vec3>() / n as f64;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        cov += (d - mu_d) * (s - mu_s).transpose();
        var_s += (s - mu_s).norm_squared();
    }
    cov /= n as f64;
    var_s /= n as f64;
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.ok_or("SVD failed")?, svd.v_t.ok_or("SVD failed")?);
    let mut sign = Matrix3::identity();
    if u.determinant() * vt.determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let rotation = u * sign * vt;
    let scale = if with_scale {
        if !(var_s > 0.0) {
            return Err("source points are coincident".into());
        }
        (svd.singular_values.component_mul(&sign.diagonal())).sum() / var_s
    } else {
        1.0
    };
    Ok(Similarity {
        rotation,
        translation: mu_d - rotation * mu_s * scale,
        scale,
    })
}

/// Absolute trajectory error, centimeters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AteReport {
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub matches: usize,
    pub alignment: Alignment,
    pub transform: Similarity,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pair each estimated pose with the nearest ground-truth timestamp within
/// half the median ground-truth frame period.
pub fn associate(est: &[(u64, PoseSE3)], gt: &[(u64, PoseSE3)]) -> Vec<(usize, usize)> {
    if gt.is_empty() {
        return Vec::new();
    }
    let mut gaps: Vec<f64> = gt.windows(2).map(|w| w[1].0.abs_diff(w[0].0) as f64).collect();
    let tol = if gaps.is_empty() { 0.0 } else { 0.5 * median(&mut gaps) };
    let mut out = Vec::new();
    for (i, (t, _)) in est.iter().enumerate() {
        let j = gt.partition_point(|g| g.0 < *t);
        let best = [j.checked_sub(1), (j < gt.len()).then_some(j)]
            .into_iter()
            .flatten()
            .min_by_key(|&k| gt[k].0.abs_diff(*t))
            .expect("gt is not empty");
        if gt[best].0.abs_diff(*t) as f64 <= tol {
            out.push((i, best));
        }
    }
    out
}

pub fn compute_ate(est: &[(u64, PoseSE3)], gt: &[(u64, PoseSE3)], alignment: Alignment) -> Result<AteReport, String> {
    let pairs = associate(est, gt);
    if pairs.len() < 3 {
        return Err(format!("need at least 3 timestamp matches, found {}", pairs.len()));
    }
    let src: Vec<Vec3> = pairs.iter().map(|&(i, _)| *est[i].1.translation()).collect();
    let dst: Vec<Vec3> = pairs.iter().map(|&(_, j)| *gt[j].1.translation()).collect();
    let errors = |tf: &Similarity| -> Vec<f64> { src.iter().zip(&dst).map(|(s, d)| (tf.apply(s) - d).norm() * 100.0).collect() };
    let rms = |err: &[f64]| (err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64).sqrt();
    // the identity competes with the fitted transform, so rounding in the
    // fit cannot make already aligned trajectories look misaligned
    let fitted = umeyama(&src, &dst, alignment == Alignment::Sim3)?;
    let identity = Similarity {
        rotation: Mat3::identity(),
        translation: Vec3::zeros(),
        scale: 1.0,
    };
    let (fit_err, id_err) = (errors(&fitted), errors(&identity));
    let (tf, mut err) = if rms(&id_err) <= rms(&fit_err) { (identity, id_err) } else { (fitted, fit_err) };
    let n = err.len() as f64;
    let rmse = rms(&err);
    let mean = err.iter().sum::<f64>() / n;
    Ok(AteReport {
        rmse,
        mean,
        median: median(&mut err),
        matches: pairs.len(),
        alignment,
        transform: tf,
    })
}

/// First positive-to-negative crossing of `sdf` along the ray within
/// `[near, far]`: `steps` uniform samples, then bisection. Returns the range.
pub fn ray_surface<F: FnMut(&Vec3) -> f64>(sdf: &mut F, ray: &Ray, near: f64, far: f64, steps: usize) -> Option<f64> {
    let step = (far - near) / steps as f64;
    let at = |t: f64| ray.origin + ray.dir * t;
    let mut prev = (near, sdf(&at(near)));
    for i in 1..=steps {
        let t = near + step * i as f64;
        let s = sdf(&at(t));
        if prev.1 > 0.0 && s <= 0.0 {
            let (mut a, mut b) = ((prev.0, prev.1), (t, s));
            for _ in 0..12 {
                let m = 0.5 * (a.0 + b.0);
                let sm = sdf(&at(m));
                if sm > 0.0 {
                    a = (m, sm);
                } else {
                    b = (m, sm);
                }
            }
            return Some(a.0 + (b.0 - a.0) * a.1 / (a.1 - b.1));
        }
        prev = (t, s);
    }
    None
}

/// Settings of the depth L1 evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthEval {
    pub poses: usize,
    pub pixels: usize,
    pub near: f64,
    pub far: f64,
    pub steps: usize,
}

impl DepthEval {
    pub fn new(near: f64, far: f64) -> Self {
        Self {
            poses: 50,
            pixels: 500,
            near,
            far,
            steps: 128,
        }
    }
}

/// Mean absolute z-depth error, centimeters, over valid pixels of randomly
/// drawn views. Rays that find no surface count as depth `far`.
pub fn compute_depth_l1<F: FnMut(&Vec3) -> f64, R: Rng + ?Sized>(
    mut sdf: F,
    views: &[(PoseSE3, &Image)],
    k: &PinholeIntrinsics,
    eval: &DepthEval,
    rng: &mut R,
) -> Result<f64, String> {
    if eval.poses == 0 || views.is_empty() {
        return Err("no views to sample".into());
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for _ in 0..eval.poses {
        let (pose, depth) = &views[rng.gen_range(0..views.len())];
        for _ in 0..eval.pixels {
            let (u, v) = (rng.gen_range(0..k.width), rng.gen_range(0..k.height));
            let gt = depth.get(u, v) as f64;
            if !(gt > 0.0) {
                continue;
            }
            let ray = camera_ray(pose, k, u as f64, v as f64, CameraId::Rgbd);
            let range = ray_surface(&mut sdf, &ray, eval.near, eval.far, eval.steps).unwrap_or(eval.far);
            let z = range / ray.range_scale;
            if !z.is_finite() {
                return Err("non-finite rendered depth".into());
            }
            sum += (z - gt).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err("no valid depth pixels in the sampled views".into());
    }
    Ok(100.0 * sum / count as f64)
}

/// Reconstruction quality against an analytic scene, centimeters and
/// percent. Accuracy is `None` for an empty mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshReport {
    pub accuracy: Option<f64>,
    pub completion: Option<f64>,
    pub completion_ratio: f64,
}

/// Surface pieces of one primitive: (area, sampler).
fn pieces(shape: &Shape, scene: &AnalyticScene) -> Result<Vec<(f64, [Vec3; 3])>, String> {
    // each piece is a parallelogram (origin, edge u, edge v) except spheres
    let b = &scene.bounds;
    match shape {
        Shape::Plane { normal, offset } => {
            let axis = (0..3).find(|&a| (normal[a].abs() - 1.0).abs() < 1e-12).ok_or("only axis-aligned planes are supported")?;
            let c = -offset / normal[axis];
            let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut o = b.min;
            o[axis] = c;
            let mut u = Vec3::zeros();
            u[a1] = b.max[a1] - b.min[a1];
            let mut v = Vec3::zeros();
            v[a2] = b.max[a2] - b.min[a2];
            Ok(vec![(u.norm() * v.norm(), [o, u, v])])
        }
        Shape::Box { center, half } => {
            let mut out = Vec::new();
            for axis in 0..3 {
                let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
                for side in [-1.0, 1.0] {
                    let mut o = center - half;
                    o[axis] = center[axis] + side * half[axis];
                    let mut u = Vec3::zeros();
                    u[a1] = 2.0 * half[a1];
                    let mut v = Vec3::zeros();
                    v[a2] = 2.0 * half[a2];
                    out.push((u.norm() * v.norm(), [o, u, v]));
                }
            }
            Ok(out)
        }
        Shape::Sphere { center, radius } => {
            let r = Vec3::new(*radius, 0.0, 0.0);
            Ok(vec![(4.0 * std::f64::consts::PI * radius * radius, [*center, r, Vec3::zeros()])])
        }
    }
}

/// `n` points uniformly distributed over the visible surface of the scene:
/// primitive surfaces inside the bounds and not buried in other primitives.
pub fn sample_scene_surface<R: Rng + ?Sized>(scene: &AnalyticScene, n: usize, rng: &mut R) -> Result<Vec<Vec3>, String> {
    let mut all = Vec::new();
    for p in &scene.primitives {
        for (area, piece) in pieces(&p.shape, scene)? {
            all.push((area, piece, matches!(p.shape, Shape::Sphere { .. })));
        }
    }
    let dist = WeightedIndex::new(all.iter().map(|a| a.0)).map_err(|_| "scene has no surface".to_string())?;
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 1000 * n.max(1) {
            return Err("scene surface is almost entirely hidden".into());
        }
        let (_, [o, u, v], sphere) = &all[dist.sample(rng)];
        let x = if *sphere {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - z * z).sqrt();
            o + Vec3::new(s * phi.cos(), s * phi.sin(), z) * u.x
        } else {
            o + u * rng.gen::<f64>() + v * rng.gen::<f64>()
        };
        let inside = (0..3).all(|a| x[a] >= scene.bounds.min[a] - 1e-9 && x[a] <= scene.bounds.max[a] + 1e-9);
        if inside && scene.distance(&x) > -1e-9 {
            out.push(x);
        }
    }
    Ok(out)
}

/// Accuracy: mean |SDF| of `samples` points drawn on the mesh. Completion:
/// mean distance from `samples` scene-surface points to the mesh, and the
/// percentage of them within [`COMPLETION_THRESHOLD`].
pub fn compute_mesh_metrics<R: Rng + ?Sized>(mesh: &Mesh, scene: &AnalyticScene, samples: usize, rng: &mut R) -> Result<MeshReport, String> {
    let gt = sample_scene_surface(scene, samples, rng)?;
    if mesh.is_empty() {
        return Ok(MeshReport {
            accuracy: None,
            completion: None,
            completion_ratio: 0.0,
        });
    }
    let pts = mesh.sample(samples, rng);
    let accuracy = pts.iter().map(|p| scene.distance(p).abs()).sum::<f64>() / pts.len() as f64;
    let dist = MeshDistance::new(mesh, 0.1);
    let d: Vec<f64> = gt.iter().map(|p| dist.distance(p).expect("mesh is not empty")).collect();
    let completion = d.iter().sum::<f64>() / d.len() as f64;
    let within = d.iter().filter(|&&x| x <= COMPLETION_THRESHOLD).count();
    Ok(MeshReport {
        accuracy: Some(100.0 * accuracy),
        completion: Some(100.0 * completion),
        completion_ratio: 100.0 * within as f64 / d.len() as f64,
    })
}
