//! Dense vertex feature grids with trilinear interpolation.

#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{Aabb, Vec3};

/// One dense level: `(n + 1)^3` vertices with `features` values each.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridLevel {
    pub resolution: usize,
    pub features: usize,
    pub bounds: Aabb,
}

/// Corner offsets (in vertices) and trilinear weights of one query point,
/// together with the weight derivatives with respect to the point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stencil {
    pub vertex: [usize; 8],
    pub weight: [f64; 8],
    pub dweight: [[f64; 3]; 8],
    /// The point was outside the domain and has been clamped onto it.
    pub clamped: bool,
}

impl GridLevel {
    pub fn new(resolution: usize, features: usize, bounds: Aabb) -> Self {
        Self {
            resolution,
            features,
            bounds,
        }
    }

    pub fn vertices_per_axis(&self) -> usize {
        self.resolution + 1
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices_per_axis().pow(3)
    }

    pub fn param_len(&self) -> usize {
        self.vertex_count() * self.features
    }

    pub fn vertex_index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.vertices_per_axis();
        (k * n + j) * n + i
    }

    /// World position of vertex `(i, j, k)`.
    pub fn vertex_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let e = self.bounds.extent();
        let n = self.resolution as f64;
        self.bounds.min + Vec3::new(e.x * i as f64 / n, e.y * j as f64 / n, e.z * k as f64 / n)
    }

    pub fn stencil(&self, x: &Vec3) -> Stencil {
        let n = self.resolution;
        let ext = self.bounds.extent();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        let mut scale = [0.0f64; 3];
        let mut clamped = false;
        for a in 0..3 {
            let s = n as f64 / ext[a];
            let mut p = (x[a] - self.bounds.min[a]) * s;
            if !(p >= 0.0) || p > n as f64 {
                clamped = true;
                p = if p > n as f64 { n as f64 } else { 0.0 };
                scale[a] = 0.0;
            } else {
                scale[a] = s;
            }
            let i0 = (p.floor() as usize).min(n - 1);
            base[a] = i0;
            frac[a] = p - i0 as f64;
        }
        let mut st = Stencil {
            clamped,
            ..Stencil::default()
        };
        for c in 0..8 {
            let (bx, by, bz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let wx = if bx == 1 { frac[0] } else { 1.0 - frac[0] };
            let wy = if by == 1 { frac[1] } else { 1.0 - frac[1] };
            let wz = if bz == 1 { frac[2] } else { 1.0 - frac[2] };
            let sx = if bx == 1 { 1.0 } else { -1.0 };
            let sy = if by == 1 { 1.0 } else { -1.0 };
            let sz = if bz == 1 { 1.0 } else { -1.0 };
            st.vertex[c] = self.vertex_index(base[0] + bx, base[1] + by, base[2] + bz);
            st.weight[c] = wx * wy * wz;
            st.dweight[c] = [
                sx * wy * wz * scale[0],
                wx * sy * wz * scale[1],
                wx * wy * sz * scale[2],
            ];
        }
        st
    }

    /// Interpolated features written to `out` (length `features`).
    pub fn interpolate(&self, params: &[f64], st: &Stencil, out: &mut [f64]) {
        let f = self.features;
        out[..f].fill(0.0);
        for c in 0..8 {
            let w = st.weight[c];
            let base = st.vertex[c] * f;
            for k in 0..f {
                out[k] += w * params[base + k];
            }
        }
    }

    /// Accumulate parameter gradients (and optionally the point gradient)
    /// for upstream feature gradient `g`.
    pub fn backward(
        &self,
        params: &[f64],
        st: &Stencil,
        g: &[f64],
        grad: &mut [f64],
        g_x: Option<&mut Vec3>,
    ) {
        let f = self.features;
        for c in 0..8 {
            let w = st.weight[c];
            let base = st.vertex[c] * f;
            for k in 0..f {
                grad[base + k] += w * g[k];
            }
        }
        if let Some(gx) = g_x {
            for c in 0..8 {
                let base = st.vertex[c] * f;
                let mut dot = 0.0;
                for k in 0..f {
                    dot += params[base + k] * g[k];
                }
                for a in 0..3 {
                    gx[a] += st.dweight[c][a] * dot;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn level() -> GridLevel {
        GridLevel::new(4, 2, Aabb::new(Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, 1.0, 3.0)))
    }

    fn params(l: &GridLevel) -> alloc::vec::Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        (0..l.param_len()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn weights_sum_to_one() {
        let l = level();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..3.0));
            let st = l.stencil(&x);
            assert!((st.weight.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(!st.clamped);
        }
    }

    #[test]
    fn vertex_query_is_exact() {
        let l = level();
        let p = params(&l);
        let mut out = [0.0; 2];
        for &(i, j, k) in &[(0, 0, 0), (2, 3, 1), (4, 4, 4), (1, 0, 4)] {
            let st = l.stencil(&l.vertex_position(i, j, k));
            l.interpolate(&p, &st, &mut out);
            let v = l.vertex_index(i, j, k) * 2;
            assert_eq!(out, [p[v], p[v + 1]]);
        }
    }

    #[test]
    fn linear_within_a_cell() {
        let l = level();
        let p = params(&l);
        let a = Vec3::new(-0.45, 0.1, 0.8);
        let b = Vec3::new(-0.1, 0.4, 1.4);
        let mut fa = [0.0; 2];
        // both points lie in the cell [-0.5, 0] x [0, 0.5] x [0.75, 1.5]
        for axis in 0..3 {
            let mut vals = [0.0; 3];
            for (n, s) in [0.0, 0.5, 1.0].iter().enumerate() {
                let mut x = a;
                x[axis] = a[axis] + (b[axis] - a[axis]) * s;
                l.interpolate(&p, &l.stencil(&x), &mut fa);
                vals[n] = fa[0];
            }
            assert!((vals[1] - 0.5 * (vals[0] + vals[2])).abs() < 1e-12);
        }
    }

    #[test]
    fn continuous_across_cell_faces() {
        let l = level();
        let p = params(&l);
        let x = Vec3::new(0.0, 0.2, 1.1);
        let (mut lo, mut hi) = ([0.0; 2], [0.0; 2]);
        l.interpolate(&p, &l.stencil(&(x - Vec3::new(1e-10, 0.0, 0.0))), &mut lo);
        l.interpolate(&p, &l.stencil(&(x + Vec3::new(1e-10, 0.0, 0.0))), &mut hi);
        assert!((lo[0] - hi[0]).abs() < 1e-8);
    }

    #[test]
    fn point_gradient_matches_finite_differences() {
        let l = level();
        let p = params(&l);
        let x = Vec3::new(0.13, -0.37, 1.91);
        let g = [0.7, -1.3];
        let mut gx = Vec3::zeros();
        let mut grad = alloc::vec![0.0; p.len()];
        l.backward(&p, &l.stencil(&x), &g, &mut grad, Some(&mut gx));
        let f = |x: Vec3| {
            let mut o = [0.0; 2];
            l.interpolate(&p, &l.stencil(&x), &mut o);
            o[0] * g[0] + o[1] * g[1]
        };
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = 1e-6;
            let fd = (f(x + e) - f(x - e)) / 2e-6;
            assert!((fd - gx[a]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn outside_points_are_clamped() {
        let l = level();
        let st = l.stencil(&Vec3::new(5.0, 0.0, 1.0));
        assert!(st.clamped);
        assert!(st.dweight.iter().all(|d| d[0] == 0.0));
    }
}
