//! The weighted SLAM objective over a batch of RGB-D and event rays, with
//! gradients for the field parameters and per-frame pose increments.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::field::SceneField;
use crate::geometry::{so3_left_jacobian, PoseSE3, Vec3};
use crate::render::{backward_field, camera_ray, render_field, BundleGrad, CameraId, RayPoseGrad, RayScratch, RenderBundle};
use crate::slam::losses::{depth_loss, event_loss, rgb_loss, EventLossMode, SdfTerms};
use crate::world::Calibration;
use crate::Result;

/// Weights of the five loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub ev: f64,
    pub rgb: f64,
    pub d: f64,
    pub sdf: f64,
    pub fs: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ev: 0.05,
            rgb: 5.0,
            d: 0.1,
            sdf: 1.0,
            fs: 0.1,
        }
    }
}

/// An RGB-D observation ray with its sample depths.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbRay {
    pub frame: usize,
    pub pixel: (usize, usize),
    pub color: [f64; 3],
    /// Observed z-depth; 0 when invalid.
    pub depth: f64,
    /// Sample ranges along the ray.
    pub z: Vec<f64>,
}

/// An event-camera pixel observed between frames `prev` and `cur`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRay {
    pub cur: usize,
    pub prev: usize,
    pub pixel: (usize, usize),
    /// Accumulated polarity over `(t_prev, t_cur]`.
    pub count: f64,
    pub z_cur: Vec<f64>,
    pub z_prev: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub rgb: Vec<RgbRay>,
    pub events: Vec<EventRay>,
}

/// Loss terms and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub ev: f64,
    pub rgb: f64,
    pub d: f64,
    pub sdf: f64,
    pub fs: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn is_finite(&self) -> bool {
        [self.ev, self.rgb, self.d, self.sdf, self.fs, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evaluation {
    pub terms: LossTerms,
    /// Channel-mean squared color residual of each RGB ray.
    pub rgb_ray_loss: Vec<f64>,
    /// Absolute z-depth residual of each RGB ray; `NaN` without a valid
    /// observation or rendered surface.
    pub depth_residual: Vec<f64>,
}

/// Gradient with respect to a left rotation increment about the RGB camera
/// center and an additive translation increment of one frame pose.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PoseGrad {
    pub rot: Vec3,
    pub trans: Vec3,
}

/// Requested gradient outputs; both accumulate.
pub struct GradRequest<'g> {
    pub field: Option<&'g mut [f64]>,
    /// Indexed by frame; only frames with `pose_mask[f]` are filled.
    pub poses: Option<&'g mut [PoseGrad]>,
    pub pose_mask: &'g [bool],
}

/// A pose expressed as `retract_split(base, phi, rho)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseVar {
    pub base: PoseSE3,
    pub phi: Vec3,
    pub rho: Vec3,
}

impl PoseVar {
    pub fn new(base: PoseSE3) -> Self {
        Self {
            base,
            phi: Vec3::zeros(),
            rho: Vec3::zeros(),
        }
    }

    pub fn pose(&self) -> PoseSE3 {
        self.base.retract_split(&self.phi, &self.rho)
    }

    /// `(d/d phi, d/d rho)` from a [`PoseGrad`] taken at [`PoseVar::pose`].
    pub fn chain(&self, g: &PoseGrad) -> (Vec3, Vec3) {
        (so3_left_jacobian(&self.phi).transpose() * g.rot, g.trans)
    }
}

/// Reusable per-ray render state.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    rgb: Vec<RayScratch>,
    ev: Vec<(RayScratch, RayScratch)>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Objective<'a> {
    pub field: &'a SceneField,
    pub calib: &'a Calibration,
    pub weights: LossWeights,
    pub tr: f64,
    pub event_mode: EventLossMode,
}

fn add_pose_grad(out: &mut PoseGrad, g: &RayPoseGrad, origin: &Vec3, pivot: &Vec3) {
    out.rot += g.rot_about(origin, pivot);
    out.trans += g.trans;
}

impl<'a> Objective<'a> {
    /// Evaluate the batch at frame poses `poses`; with `grads`, accumulate
    /// the gradient of the weighted total. Terms with zero weight are
    /// reported but contribute no gradient.
    pub fn evaluate(
        &self,
        ws: &mut Workspace,
        params: &[f64],
        poses: &[PoseSE3],
        batch: &Batch,
        mut grads: Option<GradRequest<'_>>,
    ) -> Result<Evaluation> {
        let w = self.weights;
        let tr = self.tr;
        let mut terms = LossTerms::default();
        let mut rgb_ray_loss = Vec::with_capacity(batch.rgb.len());
        let mut depth_residual = Vec::new();

        // RGB-D rays
        let n_rgb = batch.rgb.len();
        while ws.rgb.len() < n_rgb {
            ws.rgb.push(RayScratch::new());
        }
        let mut rays = Vec::with_capacity(n_rgb);
        let mut bundles: Vec<RenderBundle> = Vec::with_capacity(n_rgb);
        let mut sdf_terms = SdfTerms::default();
        for (r, rs) in batch.rgb.iter().zip(ws.rgb.iter_mut()) {
            let ray = camera_ray(&poses[r.frame], &self.calib.rgb, r.pixel.0 as f64, r.pixel.1 as f64, CameraId::Rgbd);
            bundles.push(render_field(self.field, params, &ray, &r.z, tr, rs));
            if r.depth > 0.0 {
                sdf_terms.count(&r.z, r.depth * ray.range_scale, tr);
            }
            rays.push(ray);
        }
        let mut g_rgb = vec![[0.0; 3]; n_rgb];
        let mut g_d = vec![0.0; n_rgb];
        if n_rgb > 0 {
            let pred: Vec<[f64; 3]> = bundles.iter().map(|b| b.color).collect();
            let obs: Vec<[f64; 3]> = batch.rgb.iter().map(|r| r.color).collect();
            terms.rgb = rgb_loss(&pred, &obs, Some(&mut g_rgb))?;
            for (p, o) in pred.iter().zip(&obs) {
                rgb_ray_loss.push(((p[0] - o[0]).powi(2) + (p[1] - o[1]).powi(2) + (p[2] - o[2]).powi(2)) / 3.0);
            }
            let pred_d: Vec<f64> = bundles.iter().zip(&rays).map(|(b, r)| b.depth / r.range_scale).collect();
            let obs_d: Vec<f64> = batch
                .rgb
                .iter()
                .zip(&bundles)
                .map(|(r, b)| if b.is_surface() { r.depth } else { 0.0 })
                .collect();
            terms.d = depth_loss(&pred_d, &obs_d, Some(&mut g_d));
            depth_residual = pred_d
                .iter()
                .zip(&obs_d)
                .map(|(p, o)| if *o > 0.0 { (p - o).abs() } else { f64::NAN })
                .collect();
        }
        let mut g_s: Vec<Vec<f64>> = Vec::with_capacity(n_rgb);
        for ((r, rs), ray) in batch.rgb.iter().zip(ws.rgb.iter()).zip(&rays) {
            let mut gs = vec![0.0; r.z.len()];
            if r.depth > 0.0 {
                let s: Vec<f64> = rs.samples.iter().map(|x| x.s).collect();
                let (a, b) = sdf_terms.ray(&r.z, &s, r.depth * ray.range_scale, tr, (w.sdf, w.fs), Some(&mut gs));
                terms.sdf += a;
                terms.fs += b;
            }
            g_s.push(gs);
        }

        // event rays
        let n_ev = batch.events.len();
        while ws.ev.len() < n_ev {
            ws.ev.push((RayScratch::new(), RayScratch::new()));
        }
        let mut ev_rays = Vec::with_capacity(n_ev);
        let mut ev_bundles = Vec::with_capacity(n_ev);
        let mut g_delta = vec![0.0; n_ev];
        if n_ev > 0 {
            let k = &self.calib.event;
            let mut delta = Vec::with_capacity(n_ev);
            for (e, (ra, rb)) in batch.events.iter().zip(ws.ev.iter_mut()) {
                let (u, v) = (e.pixel.0 as f64, e.pixel.1 as f64);
                let cur = camera_ray(&self.calib.event_pose(&poses[e.cur]), k, u, v, CameraId::Event);
                let prev = camera_ray(&self.calib.event_pose(&poses[e.prev]), k, u, v, CameraId::Event);
                let bc = render_field(self.field, params, &cur, &e.z_cur, tr, rb);
                let bp = render_field(self.field, params, &prev, &e.z_prev, tr, ra);
                delta.push(bc.lum - bp.lum);
                ev_rays.push((cur, prev));
                ev_bundles.push((bc, bp));
            }
            let counts: Vec<f64> = batch.events.iter().map(|e| e.count).collect();
            terms.ev = event_loss(&delta, &counts, self.event_mode, Some(&mut g_delta))?;
        }

        terms.total = w.ev * terms.ev + w.rgb * terms.rgb + w.d * terms.d + w.sdf * terms.sdf + w.fs * terms.fs;

        let Some(req) = grads.as_mut() else {
            return Ok(Evaluation {
                terms,
                rgb_ray_loss,
                depth_residual,
            });
        };
        let use_sdf = w.sdf != 0.0 || w.fs != 0.0;
        for (j, r) in batch.rgb.iter().enumerate() {
            let ray = &rays[j];
            let mut g = BundleGrad::default();
            if w.rgb != 0.0 {
                for c in 0..3 {
                    g.color[c] = w.rgb * g_rgb[j][c];
                }
            }
            if w.d != 0.0 {
                g.depth = w.d * g_d[j] / ray.range_scale;
            }
            let want_pose = req.pose_mask.get(r.frame).copied().unwrap_or(false) && req.poses.is_some();
            let mut pg = RayPoseGrad::default();
            backward_field(
                self.field,
                params,
                ray,
                tr,
                &mut ws.rgb[j],
                &bundles[j],
                &g,
                if use_sdf { Some(&g_s[j]) } else { None },
                req.field.as_deref_mut(),
                if want_pose { Some(&mut pg) } else { None },
            );
            if want_pose {
                let pivot = *poses[r.frame].translation();
                add_pose_grad(&mut req.poses.as_deref_mut().unwrap()[r.frame], &pg, &ray.origin, &pivot);
            }
        }
        if w.ev != 0.0 {
            for (j, e) in batch.events.iter().enumerate() {
                let g = w.ev * g_delta[j];
                let (cur, prev) = &ev_rays[j];
                let (bc, bp) = &ev_bundles[j];
                let (ra, rb) = &mut ws.ev[j];
                for (frame, ray, bundle, rs, sign) in [(e.cur, cur, bc, rb, 1.0), (e.prev, prev, bp, ra, -1.0)] {
                    let want_pose = req.pose_mask.get(frame).copied().unwrap_or(false) && req.poses.is_some();
                    let mut pg = RayPoseGrad::default();
                    let bg = BundleGrad {
                        lum: sign * g,
                        ..BundleGrad::default()
                    };
                    backward_field(
                        self.field,
                        params,
                        ray,
                        tr,
                        rs,
                        bundle,
                        &bg,
                        None,
                        req.field.as_deref_mut(),
                        if want_pose { Some(&mut pg) } else { None },
                    );
                    if want_pose {
                        let pivot = *poses[frame].translation();
                        add_pose_grad(&mut req.poses.as_deref_mut().unwrap()[frame], &pg, &ray.origin, &pivot);
                    }
                }
            }
        }
        Ok(Evaluation {
            terms,
            rgb_ray_loss,
            depth_residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::relative_error;
    use crate::field::{Activation, FieldConfig};
    use crate::geometry::Aabb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (SceneField, Vec<f64>, Calibration) {
        let mut c = FieldConfig::new(Aabb::new(Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, 1.0, 2.0)));
        c.levels = vec![2, 3, 4];
        c.hidden = 8;
        c.h_width = 4;
        c.crf_hidden = 4;
        c.grid_init = 2.0;
        // smooth activations keep central differences clear of kinks
        c.activation = Activation::Softplus;
        let f = SceneField::new(c);
        let mut p = f.init_params(4).values().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for v in &mut p[f.crf_params()] {
            *v += rng.gen_range(0.0..0.3);
        }
        f.project(&mut p);
        (f, p, Calibration::default())
    }

    fn toy_batch() -> Batch {
        let z = vec![0.3, 0.7, 1.1, 1.4];
        Batch {
            rgb: vec![
                RgbRay {
                    frame: 0,
                    pixel: (70, 50),
                    color: [0.4, 0.5, 0.3],
                    depth: 0.95,
                    z: z.clone(),
                },
                RgbRay {
                    frame: 1,
                    pixel: (95, 66),
                    color: [0.7, 0.2, 0.6],
                    depth: 1.2,
                    z: z.clone(),
                },
            ],
            events: vec![
                EventRay {
                    cur: 1,
                    prev: 0,
                    pixel: (60, 40),
                    count: 2.0,
                    z_cur: z.clone(),
                    z_prev: vec![0.35, 0.8, 1.0, 1.3],
                },
                EventRay {
                    cur: 1,
                    prev: 0,
                    pixel: (70, 52),
                    count: -1.0,
                    z_cur: vec![0.25, 0.6, 1.15, 1.5],
                    z_prev: z,
                },
            ],
        }
    }

    fn vars() -> [PoseVar; 2] {
        let base = |ax: f64, t: Vec3| {
            PoseSE3::new(nalgebra::UnitQuaternion::from_euler_angles(ax, -0.5 * ax, 0.3 * ax), t)
        };
        [
            PoseVar {
                base: base(0.05, Vec3::new(0.05, -0.02, 0.1)),
                phi: Vec3::new(0.02, -0.01, 0.03),
                rho: Vec3::new(0.01, 0.0, -0.02),
            },
            PoseVar {
                base: base(-0.04, Vec3::new(-0.03, 0.04, 0.15)),
                phi: Vec3::new(-0.03, 0.02, 0.01),
                rho: Vec3::new(0.0, 0.02, 0.01),
            },
        ]
    }

    fn total(obj: &Objective, p: &[f64], v: &[PoseVar; 2]) -> f64 {
        let poses = [v[0].pose(), v[1].pose()];
        obj.evaluate(&mut Workspace::new(), p, &poses, &toy_batch(), None).unwrap().terms.total
    }

    fn check(mode: EventLossMode) {
        let (field, p, calib) = toy();
        let obj = Objective {
            field: &field,
            calib: &calib,
            weights: LossWeights {
                ev: 0.7,
                rgb: 5.0,
                d: 0.1,
                sdf: 2.0,
                fs: 1.0,
            },
            tr: 0.5,
            event_mode: mode,
        };
        let v = vars();
        let poses = [v[0].pose(), v[1].pose()];
        let mut g = vec![0.0; p.len()];
        let mut pg = [PoseGrad::default(); 2];
        let eval = obj
            .evaluate(
                &mut Workspace::new(),
                &p,
                &poses,
                &toy_batch(),
                Some(GradRequest {
                    field: Some(&mut g),
                    poses: Some(&mut pg),
                    pose_mask: &[true, true],
                }),
            )
            .unwrap();
        assert!(eval.terms.ev > 0.0 && eval.terms.sdf > 0.0 && eval.terms.fs > 0.0 && eval.terms.d > 0.0);
        let h = 1e-6;
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for seg in field.layout().segments() {
            let range = seg.range();
            let mut worst: f64 = 0.0;
            for i in range {
                let (mut a, mut b) = (p.clone(), p.clone());
                a[i] += h;
                b[i] -= h;
                let fd = (total(&obj, &a, &v) - total(&obj, &b, &v)) / (2.0 * h);
                worst = worst.max(relative_error(g[i], fd, scale));
            }
            assert!(worst < 1e-4, "{}: {worst}", seg.name);
        }
        for family in ["grid", "decoder", "crf.color", "crf.luminance"] {
            let reached = field
                .layout()
                .segments()
                .iter()
                .filter(|s| s.name.starts_with(family))
                .any(|s| g[s.range()].iter().any(|x| x.abs() > 1e-12));
            assert!(reached, "{family} gets no gradient");
        }
        for f in 0..2 {
            let (g_phi, g_rho) = v[f].chain(&pg[f]);
            for k in 0..6 {
                let moved = |sign: f64| {
                    let mut w = v;
                    if k < 3 {
                        w[f].phi[k] += sign * h;
                    } else {
                        w[f].rho[k - 3] += sign * h;
                    }
                    total(&obj, &p, &w)
                };
                let fd = (moved(1.0) - moved(-1.0)) / (2.0 * h);
                let an = if k < 3 { g_phi[k] } else { g_rho[k - 3] };
                assert!(relative_error(an, fd, 1.0) < 1e-4, "frame {f} coord {k}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn full_objective_gradients_match_finite_differences() {
        check(EventLossMode::KnownC(0.2));
        check(EventLossMode::Normalized);
    }

    #[test]
    fn zero_weight_removes_gradient_exactly() {
        let (field, p, calib) = toy();
        let v = vars();
        let poses = [v[0].pose(), v[1].pose()];
        let grad_of = |weights: LossWeights| {
            let obj = Objective {
                field: &field,
                calib: &calib,
                weights,
                tr: 0.5,
                event_mode: EventLossMode::Normalized,
            };
            let mut g = vec![0.0; p.len()];
            obj.evaluate(
                &mut Workspace::new(),
                &p,
                &poses,
                &toy_batch(),
                Some(GradRequest {
                    field: Some(&mut g),
                    poses: None,
                    pose_mask: &[],
                }),
            )
            .unwrap();
            g
        };
        let base = LossWeights {
            ev: 0.0,
            ..LossWeights::default()
        };
        let with_ev = LossWeights::default();
        let a = grad_of(base);
        let b = grad_of(with_ev);
        assert_ne!(a, b);
        // the event term alone, added to the rest, reproduces the full gradient
        let c = grad_of(LossWeights {
            ev: with_ev.ev,
            rgb: 0.0,
            d: 0.0,
            sdf: 0.0,
            fs: 0.0,
        });
        for i in 0..p.len() {
            assert!((a[i] + c[i] - b[i]).abs() <= 1e-12 * b[i].abs().max(1.0));
        }
    }
}
