//! Rigid-body geometry: SO(3)/SE(3) exponential maps, camera poses and
//! pinhole intrinsics.
//!
//! Poses are camera-to-world transforms. Tangent vectors are ordered
//! `(rho, phi)`: translation first, rotation second.

#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric matrix `[v]x` such that `[v]x w = v x w`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// SO(3) exponential map.
pub fn so3_exp(phi: &Vec3) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*phi)
}

/// SO(3) logarithm (rotation vector).
pub fn so3_log(q: &UnitQuaternion<f64>) -> Vec3 {
    q.scaled_axis()
}

/// Left Jacobian of SO(3): `Exp(phi + d) ~= Exp(J_l(phi) d) Exp(phi)`.
pub fn so3_left_jacobian(phi: &Vec3) -> Mat3 {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    let k2 = k * k;
    if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        return Mat3::identity() + k * 0.5 + k2 * (1.0 / 6.0);
    }
    let theta = theta2.sqrt();
    let a = (1.0 - theta.cos()) / theta2;
    let b = (theta - theta.sin()) / (theta2 * theta);
    Mat3::identity() + k * a + k2 * b
}

/// Inverse of [`so3_left_jacobian`].
pub fn so3_left_jacobian_inv(phi: &Vec3) -> Mat3 {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    let k2 = k * k;
    if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        return Mat3::identity() - k * 0.5 + k2 * (1.0 / 12.0);
    }
    let theta = theta2.sqrt();
    let half = 0.5 * theta;
    let c = (1.0 - half * half.cos() / half.sin()) / theta2;
    Mat3::identity() - k * 0.5 + k2 * c
}

/// Rigid camera pose (camera-to-world), unit quaternion + translation in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3 {
    rotation: UnitQuaternion<f64>,
    translation: Vec3,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: UnitQuaternion::new_normalize(rotation.into_inner()),
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), t)
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.rotation, iso.translation.vector)
    }

    /// SE(3) exponential of the tangent `(rho, phi)`.
    pub fn exp(xi: &[f64; 6]) -> Self {
        let rho = Vec3::new(xi[0], xi[1], xi[2]);
        let phi = Vec3::new(xi[3], xi[4], xi[5]);
        Self {
            rotation: so3_exp(&phi),
            translation: so3_left_jacobian(&phi) * rho,
        }
    }

    /// SE(3) logarithm, inverse of [`PoseSE3::exp`].
    pub fn log(&self) -> [f64; 6] {
        let phi = so3_log(&self.rotation);
        let rho = so3_left_jacobian_inv(&phi) * self.translation;
        [rho.x, rho.y, rho.z, phi.x, phi.y, phi.z]
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
    }

    pub fn compose(&self, other: &PoseSE3) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn rotate_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Split retraction used by the optimizer: rotation perturbed on the left
    /// about the camera center, translation perturbed additively.
    pub fn retract_split(&self, rot: &Vec3, trans: &Vec3) -> Self {
        Self::new(so3_exp(rot) * self.rotation, self.translation + trans)
    }

    /// Geodesic interpolation: slerp on rotation, lerp on translation.
    pub fn interpolate(&self, other: &PoseSE3, s: f64) -> Self {
        let rotation = self
            .rotation
            .try_slerp(&other.rotation, s, 1e-12)
            .unwrap_or(self.rotation);
        Self::new(rotation, self.translation.lerp(&other.translation, s))
    }

    /// Rotation angle between two poses, radians.
    pub fn angle_to(&self, other: &PoseSE3) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    /// Constant-velocity extrapolation `P_{t-1} (P_{t-2}^{-1} P_{t-1})`.
    pub fn extrapolate(prev2: &PoseSE3, prev1: &PoseSE3) -> Self {
        prev1.compose(&prev2.inverse().compose(prev1))
    }

    /// Build a camera pose looking from `eye` toward `target` (camera +z
    /// forward, +y down, +x right).
    pub fn look_at(eye: &Vec3, target: &Vec3, world_up: &Vec3) -> Self {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(world_up);
        if right.norm() < 1e-9 {
            right = forward.cross(&Vec3::new(1.0, 0.0, 0.0));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let m = Mat3::from_columns(&[right, down, forward]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), *eye)
    }
}

/// Pinhole intrinsics. Pixel `(u, v)` has its center at integer
/// coordinates, so the principal-point pixel maps to the optical axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinholeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        }
    }

    /// Camera-frame ray through pixel `(u, v)` with unit z component.
    pub fn backproject(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Project a camera-frame point; `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 1e-12 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u > -0.5 && v > -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }

    /// Intrinsics of the same camera resampled to `width x height` pixels.
    pub fn resampled(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// The box grown by `margin` on every side.
    pub fn padded(&self, margin: f64) -> Self {
        let m = Vec3::repeat(margin);
        Self::new(self.min - m, self.max + m)
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Slab test; returns the `(t_enter, t_exit)` interval, if any.
    pub fn intersect_ray(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            if dir[i].abs() < 1e-15 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let mut a = (self.min[i] - origin[i]) * inv;
            let mut b = (self.max[i] - origin[i]) * inv;
            if a > b {
                core::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t1 >= t0.max(0.0)).then_some((t0.max(0.0), t1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_vec(seed: u64) -> Vec3 {
        // small deterministic LCG, enough for fixtures
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        Vec3::new(next(), next(), next())
    }

    #[test]
    fn exp_log_round_trip() {
        for seed in 0..50 {
            let rho = rand_vec(seed);
            let phi = rand_vec(seed + 100) * 2.0;
            let xi = [rho.x, rho.y, rho.z, phi.x, phi.y, phi.z];
            let back = PoseSE3::exp(&xi).log();
            for i in 0..6 {
                assert!((xi[i] - back[i]).abs() < 1e-9, "{xi:?} vs {back:?}");
            }
        }
    }

    #[test]
    fn left_jacobian_inverse() {
        for seed in 0..20 {
            let phi = rand_vec(seed) * 2.5;
            let prod = so3_left_jacobian(&phi) * so3_left_jacobian_inv(&phi);
            assert!((prod - Mat3::identity()).norm() < 1e-10);
        }
    }

    #[test]
    fn left_jacobian_matches_finite_differences() {
        let phi = Vec3::new(0.3, -0.7, 0.4);
        let v = Vec3::new(0.2, 1.0, -0.5);
        let q = so3_exp(&phi);
        let analytic = -skew(&(q * v)) * so3_left_jacobian(&phi);
        let h = 1e-6;
        for j in 0..3 {
            let mut d = Vec3::zeros();
            d[j] = h;
            let num = (so3_exp(&(phi + d)) * v - so3_exp(&(phi - d)) * v) / (2.0 * h);
            for i in 0..3 {
                assert!((num[i] - analytic[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn se3_action_jacobian_at_identity() {
        // d/dxi [exp(xi) x] at xi = 0 is [I | -x^]
        let x = Vec3::new(0.4, -1.2, 2.0);
        let h = 1e-6;
        let expected_rot = -skew(&x);
        for j in 0..6 {
            let mut xp = [0.0; 6];
            let mut xm = [0.0; 6];
            xp[j] = h;
            xm[j] = -h;
            let num =
                (PoseSE3::exp(&xp).transform_point(&x) - PoseSE3::exp(&xm).transform_point(&x)) / (2.0 * h);
            for i in 0..3 {
                let want = if j < 3 {
                    if i == j { 1.0 } else { 0.0 }
                } else {
                    expected_rot[(i, j - 3)]
                };
                assert!((num[i] - want).abs() < 1e-8, "({i},{j}) {} vs {want}", num[i]);
            }
        }
    }

    #[test]
    fn constant_velocity_extrapolation() {
        let a = PoseSE3::exp(&[0.0, 0.0, 0.0, 0.0, 0.1, 0.0]);
        let b = PoseSE3::exp(&[0.1, 0.0, 0.0, 0.0, 0.2, 0.0]);
        let c = PoseSE3::extrapolate(&a, &b);
        let expected = b.compose(&a.inverse().compose(&b));
        assert!((c.translation() - expected.translation()).norm() < 1e-12);
        assert!(c.angle_to(&expected) < 1e-12);
    }

    #[test]
    fn look_at_points_camera_forward() {
        let eye = Vec3::new(1.0, 2.0, 0.5);
        let target = Vec3::new(3.0, 2.0, 0.5);
        let pose = PoseSE3::look_at(&eye, &target, &Vec3::new(0.0, 0.0, 1.0));
        let fwd = pose.rotate_vector(&Vec3::new(0.0, 0.0, 1.0));
        assert!((fwd - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let down = pose.rotate_vector(&Vec3::new(0.0, 1.0, 0.0));
        assert!((down - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn resampled_intrinsics_keep_pixel_centers() {
        let k = PinholeIntrinsics::new(110.0, 110.0, 64.0, 48.0, 128, 96);
        let m = k.resampled(8, 6);
        // pixel block [0, 16) maps to mini pixel 0 with center at 7.5
        let p = k.backproject(7.5, 7.5);
        let (u, v) = m.project(&p).unwrap();
        assert!(u.abs() < 1e-12 && v.abs() < 1e-12);
    }

    #[test]
    fn aabb_slab() {
        let b = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0));
        let (t0, t1) = b.intersect_ray(&Vec3::new(-1.0, 0.5, 0.5), &Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((t0 - 1.0).abs() < 1e-12 && (t1 - 2.0).abs() < 1e-12);
        assert!(b.intersect_ray(&Vec3::new(-1.0, 2.0, 0.5), &Vec3::new(1.0, 0.0, 0.0)).is_none());
    }
}
