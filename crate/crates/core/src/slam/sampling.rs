//! Pixel sampling: stratified RGB patches and probability-weighted event
//! patches guided by the projected RGB loss.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::geometry::{PinholeIntrinsics, PoseSE3};

/// Regular grid of `cols x rows` patches over a `width x height` image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub cols: usize,
    pub rows: usize,
    pub width: usize,
    pub height: usize,
}

impl PatchGrid {
    pub fn new(cols: usize, rows: usize, width: usize, height: usize) -> Self {
        assert!(cols >= 1 && rows >= 1 && cols <= width && rows <= height);
        Self {
            cols,
            rows,
            width,
            height,
        }
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel bounds `[u0, u1) x [v0, v1)` of patch `q` (row-major).
    pub fn bounds(&self, q: usize) -> (usize, usize, usize, usize) {
        let (c, r) = (q % self.cols, q / self.cols);
        (
            c * self.width / self.cols,
            (c + 1) * self.width / self.cols,
            r * self.height / self.rows,
            (r + 1) * self.height / self.rows,
        )
    }

    /// Integer pixel nearest to the patch center.
    pub fn center(&self, q: usize) -> (usize, usize) {
        let (u0, u1, v0, v1) = self.bounds(q);
        ((u0 + u1 - 1) / 2, (v0 + v1 - 1) / 2)
    }

    pub fn patch_of(&self, u: usize, v: usize) -> usize {
        let c = (u * self.cols / self.width).min(self.cols - 1);
        let r = (v * self.rows / self.height).min(self.rows - 1);
        r * self.cols + c
    }

    /// Uniform pixel inside patch `q`.
    pub fn draw_pixel<R: Rng + ?Sized>(&self, q: usize, rng: &mut R) -> (usize, usize) {
        let (u0, u1, v0, v1) = self.bounds(q);
        (rng.gen_range(u0..u1), rng.gen_range(v0..v1))
    }

    /// `per_patch` uniform pixels from every patch, patch by patch.
    pub fn stratified<R: Rng + ?Sized>(&self, per_patch: usize, rng: &mut R) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.len() * per_patch);
        for q in 0..self.len() {
            for _ in 0..per_patch {
                out.push(self.draw_pixel(q, rng));
            }
        }
        out
    }
}

/// Transfer of RGB pixel `m_c` with depth `z_c` into a plane with
/// intrinsics `k_m`: back-project, map with `t_ec`, project. Returns the
/// pixel and its depth, or `None` behind the camera. The identity transfer
/// returns its input unchanged.
pub fn project_to_plane(
    m_c: (f64, f64),
    z_c: f64,
    k: &PinholeIntrinsics,
    k_m: &PinholeIntrinsics,
    t_ec: &PoseSE3,
) -> Option<((f64, f64), f64)> {
    if k == k_m && *t_ec == PoseSE3::identity() {
        return (z_c > 0.0).then_some((m_c, z_c));
    }
    let x_c = k.backproject(m_c.0, m_c.1) * z_c;
    let x_e = t_ec.transform_point(&x_c);
    if !(x_e.z > 0.0) {
        return None;
    }
    Some((
        (k_m.fx * x_e.x / x_e.z + k_m.cx, k_m.fy * x_e.y / x_e.z + k_m.cy),
        x_e.z,
    ))
}

/// Normalize non-negative patch losses into sampling probabilities.
/// Returns `None` when the total is not positive.
pub fn patch_probabilities(losses: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = losses.iter().filter(|l| l.is_finite() && **l > 0.0).sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    Some(
        losses
            .iter()
            .map(|&l| if l.is_finite() && l > 0.0 { l / total } else { 0.0 })
            .collect(),
    )
}

/// Per-pixel losses on a `k_m` plane from scattered RGB patch losses.
///
/// Each RGB patch center with a valid depth is projected into the plane and
/// its loss splatted bilinearly; pixels are the weight-normalized sums.
/// Pixels no projection reaches take the mean of the covered pixels.
pub fn splat_patch_losses(
    grid: &PatchGrid,
    losses: &[f64],
    center_depth: &[f64],
    k: &PinholeIntrinsics,
    k_m: &PinholeIntrinsics,
    t_ec: &PoseSE3,
) -> Vec<f64> {
    let (w, h) = (k_m.width, k_m.height);
    let mut acc = vec![0.0; w * h];
    let mut wsum = vec![0.0; w * h];
    for q in 0..grid.len() {
        let z = center_depth[q];
        if !(z > 0.0) || !losses[q].is_finite() {
            continue;
        }
        let (cu, cv) = grid.center(q);
        let Some(((u, v), _)) = project_to_plane((cu as f64, cv as f64), z, k, k_m, t_ec) else {
            continue;
        };
        let (fu, fv) = (u.floor(), v.floor());
        let (au, av) = (u - fu, v - fv);
        for (du, dv, wt) in [
            (0, 0, (1.0 - au) * (1.0 - av)),
            (1, 0, au * (1.0 - av)),
            (0, 1, (1.0 - au) * av),
            (1, 1, au * av),
        ] {
            let (pu, pv) = (fu as i64 + du, fv as i64 + dv);
            if pu < 0 || pv < 0 || pu >= w as i64 || pv >= h as i64 || wt <= 0.0 {
                continue;
            }
            let i = pv as usize * w + pu as usize;
            acc[i] += wt * losses[q];
            wsum[i] += wt;
        }
    }
    let covered: Vec<usize> = (0..w * h).filter(|&i| wsum[i] > 0.0).collect();
    let mut out = vec![0.0; w * h];
    for &i in &covered {
        out[i] = acc[i] / wsum[i];
    }
    if !covered.is_empty() {
        let mean = covered.iter().map(|&i| out[i]).sum::<f64>() / covered.len() as f64;
        for i in 0..w * h {
            if wsum[i] <= 0.0 {
                out[i] = mean;
            }
        }
    }
    out
}

/// Draw `count` patch indices from `probs`, falling back to uniform draws
/// when no patch has positive probability.
pub fn draw_patches<R: Rng + ?Sized>(probs: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    match WeightedIndex::new(probs) {
        Ok(dist) => (0..count).map(|_| dist.sample(rng)).collect(),
        Err(_) => (0..count).map(|_| rng.gen_range(0..probs.len())).collect(),
    }
}

/// Probability-weighted event pixels: RGB patch losses are carried into the
/// event mini-plane, whose pixels index the event-plane patches, then
/// `count` pixels are drawn patch-proportionally to the loss.
#[allow(clippy::too_many_arguments)]
pub fn pw_sampling<R: Rng + ?Sized>(
    rgb_grid: &PatchGrid,
    rgb_losses: &[f64],
    center_depth: &[f64],
    k: &PinholeIntrinsics,
    k_m: &PinholeIntrinsics,
    t_ec: &PoseSE3,
    event_grid: &PatchGrid,
    count: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    debug_assert_eq!(event_grid.len(), k_m.pixel_count());
    let mini = splat_patch_losses(rgb_grid, rgb_losses, center_depth, k, k_m, t_ec);
    let probs = patch_probabilities(&mini).unwrap_or_else(|| vec![1.0; mini.len()]);
    draw_patches(&probs, count, rng)
        .into_iter()
        .map(|q| event_grid.draw_pixel(q, rng))
        .collect()
}
