//! Analytic signed-distance scenes.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Aabb, Vec3};

/// Signed-distance primitive. Distances are positive in free space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    /// Solid axis-aligned box.
    Box { center: Vec3, half: Vec3 },
    /// Half-space boundary; free space is where `normal . x + offset > 0`.
    Plane { normal: Vec3, offset: f64 },
}

impl Shape {
    pub fn sdf(&self, p: &Vec3) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (p - center).norm() - radius,
            Shape::Box { center, half } => {
                let q = (p - center).abs() - half;
                let outside = q.map(|v| v.max(0.0)).norm();
                outside + q.max().min(0.0)
            }
            Shape::Plane { normal, offset } => normal.dot(p) + offset,
        }
    }

    /// Outward (free-space facing) unit normal at a surface point.
    pub fn normal(&self, p: &Vec3) -> Vec3 {
        match self {
            Shape::Sphere { center, .. } => (p - center).normalize(),
            Shape::Box { center, half } => {
                let d = p - center;
                let q = d.abs() - half;
                let axis = q.imax();
                let mut n = Vec3::zeros();
                n[axis] = d[axis].signum();
                n
            }
            Shape::Plane { normal, .. } => *normal,
        }
    }

    /// Closed-form first intersection with `t > t_min`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_min: f64) -> Option<f64> {
        match self {
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [-b - s, -b + s].into_iter().find(|&t| t > t_min)
            }
            Shape::Box { center, half } => {
                let b = Aabb::new(center - half, center + half);
                let (t0, _) = b.intersect_ray(origin, dir)?;
                (t0 > t_min).then_some(t0)
            }
            Shape::Plane { normal, offset } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = -(normal.dot(origin) + offset) / denom;
                (t > t_min && denom < 0.0).then_some(t)
            }
        }
    }
}

/// Procedural two-tone pattern in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Checker {
    pub period: f64,
    /// Fraction by which dark cells are attenuated, in `[0, 1)`.
    pub contrast: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePrimitive {
    pub shape: Shape,
    pub albedo: [f64; 3],
    pub checker: Option<Checker>,
}

impl SurfacePrimitive {
    pub fn new(shape: Shape, albedo: [f64; 3]) -> Self {
        Self {
            shape,
            albedo,
            checker: None,
        }
    }

    pub fn with_checker(mut self, period: f64, contrast: f64) -> Self {
        self.checker = Some(Checker { period, contrast });
        self
    }

    pub fn albedo_at(&self, p: &Vec3) -> [f64; 3] {
        let Some(ch) = self.checker else {
            return self.albedo;
        };
        // phase keeps axis-aligned walls off the cell boundaries
        let cell = |x: f64| ((x + 0.137) / ch.period).floor() as i64;
        let parity = (cell(p.x) + cell(p.y) + cell(p.z)).rem_euclid(2);
        let f = if parity == 0 { 1.0 } else { 1.0 - ch.contrast };
        [self.albedo[0] * f, self.albedo[1] * f, self.albedo[2] * f]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shading {
    /// Ambient plus a directional Lambertian term.
    Lambertian,
    /// Albedo times ambient level only.
    Flat,
}

/// Union of primitives with per-surface albedo, lit by one directional light.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticScene {
    pub primitives: Vec<SurfacePrimitive>,
    pub ambient_level: f64,
    pub bounds: Aabb,
    /// Direction the light travels (unit).
    pub light_dir: Vec3,
    pub shading: Shading,
}

/// Result of a sphere-traced ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub primitive: usize,
}

const HIT_EPS: f64 = 1e-7;
const MAX_STEPS: usize = 512;

impl AnalyticScene {
    /// Union SDF and the index of the closest primitive.
    pub fn sdf(&self, p: &Vec3) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, prim) in self.primitives.iter().enumerate() {
            let d = prim.shape.sdf(p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        self.sdf(p).0
    }

    /// Sphere tracing inside the scene bounds.
    pub fn trace(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        let (t_start, t_end) = self.bounds.intersect_ray(origin, dir)?;
        let mut t = t_start;
        for _ in 0..MAX_STEPS {
            let p = origin + dir * t;
            let (d, prim) = self.sdf(&p);
            if d < HIT_EPS {
                return Some(Hit {
                    t,
                    point: p,
                    primitive: prim,
                });
            }
            t += d;
            if t > t_end + 1e-6 {
                return None;
            }
        }
        None
    }

    /// Exact first intersection over all primitives (test oracle).
    pub fn intersect_analytic(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        self.primitives
            .iter()
            .filter_map(|p| p.shape.intersect(origin, dir, 0.0))
            .filter(|&t| {
                let q = origin + dir * t;
                (0..3).all(|i| q[i] >= self.bounds.min[i] - 1e-9 && q[i] <= self.bounds.max[i] + 1e-9)
            })
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
    }

    /// Linear RGB radiance leaving a surface point, in `[0, 1]`.
    pub fn shade(&self, hit: &Hit) -> [f64; 3] {
        let prim = &self.primitives[hit.primitive];
        let albedo = prim.albedo_at(&hit.point);
        let s = match self.shading {
            Shading::Flat => 1.0,
            Shading::Lambertian => {
                let n = prim.shape.normal(&hit.point);
                0.35 + 0.65 * (-n.dot(&self.light_dir)).max(0.0)
            }
        };
        let k = s * self.ambient_level;
        [
            (albedo[0] * k).clamp(0.0, 1.0),
            (albedo[1] * k).clamp(0.0, 1.0),
            (albedo[2] * k).clamp(0.0, 1.0),
        ]
    }

    /// Inside the bounds and at least `margin` away from every surface.
    pub fn is_free(&self, p: &Vec3, margin: f64) -> bool {
        self.bounds.contains(p) && self.distance(p) > margin
    }

    /// Box room `4 x 4 x 3` m (walls as planes) with 3 to 6 inner primitives
    /// selected and tinted by `seed`.
    pub fn room(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (hx, hy, hz) = (2.0, 2.0, 3.0);
        let bounds = Aabb::new(Vec3::new(-hx, -hy, 0.0), Vec3::new(hx, hy, hz));
        let wall = |n: Vec3, off: f64, albedo: [f64; 3], period: f64| {
            SurfacePrimitive::new(Shape::Plane { normal: n, offset: off }, albedo)
                .with_checker(period, 0.45)
        };
        let mut primitives = alloc::vec![
            wall(Vec3::new(1.0, 0.0, 0.0), hx, [0.85, 0.55, 0.45], 0.5),
            wall(Vec3::new(-1.0, 0.0, 0.0), hx, [0.45, 0.7, 0.85], 0.4),
            wall(Vec3::new(0.0, 1.0, 0.0), hy, [0.7, 0.85, 0.5], 0.6),
            wall(Vec3::new(0.0, -1.0, 0.0), hy, [0.9, 0.8, 0.5], 0.45),
            wall(Vec3::new(0.0, 0.0, 1.0), 0.0, [0.6, 0.6, 0.65], 0.5),
            wall(Vec3::new(0.0, 0.0, -1.0), hz, [0.9, 0.9, 0.9], 0.7),
        ];
        let candidates = [
            Shape::Sphere { center: Vec3::new(1.2, 1.2, 0.45), radius: 0.45 },
            Shape::Box { center: Vec3::new(-1.25, 1.2, 0.4), half: Vec3::new(0.45, 0.35, 0.4) },
            Shape::Box { center: Vec3::new(1.2, -1.25, 0.5), half: Vec3::new(0.4, 0.45, 0.5) },
            Shape::Sphere { center: Vec3::new(-1.3, -1.3, 1.2), radius: 0.35 },
            Shape::Box { center: Vec3::new(0.0, 1.7, 1.6), half: Vec3::new(0.5, 0.2, 0.3) },
            Shape::Sphere { center: Vec3::new(1.6, 0.0, 2.2), radius: 0.3 },
        ];
        let count = rng.gen_range(3..=6);
        for shape in candidates.iter().take(count) {
            let albedo = [
                rng.gen_range(0.25..0.95),
                rng.gen_range(0.25..0.95),
                rng.gen_range(0.25..0.95),
            ];
            primitives.push(SurfacePrimitive::new(*shape, albedo).with_checker(0.2, 0.35));
        }
        Self {
            primitives,
            ambient_level: 1.0,
            bounds,
            light_dir: Vec3::new(0.3, 0.2, -1.0).normalize(),
            shading: Shading::Lambertian,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn box_sdf_inside_and_outside() {
        let b = Shape::Box { center: Vec3::zeros(), half: Vec3::new(1.0, 1.0, 1.0) };
        assert!((b.sdf(&Vec3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        assert!((b.sdf(&Vec3::new(0.5, 0.0, 0.0)) + 0.5).abs() < 1e-12);
        assert!((b.sdf(&Vec3::new(2.0, 2.0, 1.0)) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sphere_trace_matches_closed_form() {
        let scene = AnalyticScene::room(3);
        let origin = Vec3::new(0.1, -0.2, 1.4);
        let mut worst: f64 = 0.0;
        for i in 0..400 {
            let a = i as f64 * 0.61;
            let b = (i as f64 * 0.37).sin() * 1.2;
            let dir = Vec3::new(a.cos() * b.cos(), a.sin() * b.cos(), b.sin()).normalize();
            let traced = scene.trace(&origin, &dir).unwrap().t;
            let exact = scene.intersect_analytic(&origin, &dir).unwrap();
            worst = worst.max((traced - exact).abs());
        }
        assert!(worst < 1e-4, "worst {worst}");
    }

    #[test]
    fn union_sdf_is_lipschitz() {
        let scene = AnalyticScene::room(5);
        for i in 0..500 {
            let p = Vec3::new((i as f64 * 0.13).sin() * 1.9, (i as f64 * 0.29).cos() * 1.9, 1.5 + (i as f64 * 0.07).sin());
            let q = p + Vec3::new(0.01, -0.02, 0.015);
            assert!((scene.distance(&p) - scene.distance(&q)).abs() <= (p - q).norm() + 1e-12);
        }
    }

    #[test]
    fn room_has_three_to_six_inner_primitives() {
        for seed in 0..20 {
            let n = AnalyticScene::room(seed).primitives.len() - 6;
            assert!((3..=6).contains(&n));
        }
    }

    #[test]
    fn escaping_ray_misses() {
        let scene = AnalyticScene {
            primitives: vec![SurfacePrimitive::new(
                Shape::Plane { normal: Vec3::new(0.0, 0.0, 1.0), offset: -1.0 },
                [0.5; 3],
            )],
            ambient_level: 1.0,
            bounds: Aabb::new(Vec3::new(-5.0, -5.0, -5.0), Vec3::new(5.0, 5.0, 5.0)),
            light_dir: Vec3::new(0.0, 0.0, -1.0),
            shading: Shading::Flat,
        };
        // free space is z > 1; looking up never reaches the plane
        assert!(scene.trace(&Vec3::new(0.0, 0.0, 2.0), &Vec3::new(0.0, 0.0, 1.0)).is_none());
        assert!(scene.trace(&Vec3::new(0.0, 0.0, 2.0), &Vec3::new(0.0, 0.0, -1.0)).is_some());
    }
}
