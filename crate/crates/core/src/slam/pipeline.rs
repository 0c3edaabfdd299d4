//! Alternating per-frame tracking and periodic global bundle adjustment.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diff::ParamVector;
use crate::error::{Error, Result};
use crate::event::EventStream;
use crate::field::{FieldConfig, ParamGroup, SceneField};
use crate::geometry::{Aabb, PinholeIntrinsics, PoseSE3, Vec3};
use crate::image::Image;
use crate::render::{sample_ray, SamplingConfig};
use crate::slam::losses::EventLossMode;
use crate::slam::objective::{
    Batch, EventRay, GradRequest, LossTerms, LossWeights, Objective, PoseGrad, PoseVar, RgbRay, Workspace,
};
use crate::slam::optim::Adam;
use crate::slam::sampling::{pw_sampling, PatchGrid};
use crate::slam::table::{forward_query, LossThreshold, PrevIndexTable, TableEntry};
use crate::world::sequence::DEFAULT_EXPOSURE;
use crate::world::{Calibration, Sequence};

/// One RGB-D frame as seen by the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameObs {
    pub timestamp: u64,
    pub rgb: Image,
    /// z-depth, 0 where invalid.
    pub depth: Image,
    /// RGB depth carried into the event camera; 0 where nothing landed.
    pub event_depth: Image,
}

impl FrameObs {
    pub fn new(timestamp: u64, rgb: Image, depth: Image, calib: &Calibration) -> Self {
        let event_depth = warp_depth(&depth, &calib.rgb, &calib.event, &calib.t_ec);
        Self {
            timestamp,
            rgb,
            depth,
            event_depth,
        }
    }

    pub fn from_sequence(seq: &Sequence) -> Vec<Self> {
        seq.frames
            .iter()
            .map(|f| Self::new(f.timestamp, f.rgb.clone(), f.depth.clone(), &seq.calib))
            .collect()
    }
}

/// Drop rays whose depth residual exceeds `factor` times the median
/// residual; rays without a residual (`NaN`) are kept.
pub fn drop_outliers(rays: Vec<RgbRay>, residual: &[f64], factor: f64) -> Vec<RgbRay> {
    let mut finite: Vec<f64> = residual.iter().copied().filter(|r| r.is_finite()).collect();
    if finite.is_empty() {
        return rays;
    }
    finite.sort_by(|a, b| a.total_cmp(b));
    let limit = factor * finite[finite.len() / 2].max(1e-6);
    rays.into_iter()
        .zip(residual)
        .filter(|(_, r)| !(**r > limit))
        .map(|(ray, _)| ray)
        .collect()
}

/// Forward-splat a z-depth map into another camera with a z-buffer, keeping
/// the nearest surface per target pixel.
pub fn warp_depth(depth: &Image, k: &PinholeIntrinsics, k_t: &PinholeIntrinsics, t: &PoseSE3) -> Image {
    let mut out = Image::new(k_t.width, k_t.height, 1);
    for v in 0..depth.height {
        for u in 0..depth.width {
            let z = depth.get(u, v) as f64;
            if !(z > 0.0) {
                continue;
            }
            let x = t.transform_point(&(k.backproject(u as f64, v as f64) * z));
            if !(x.z > 0.0) {
                continue;
            }
            let Some((pu, pv)) = k_t.project(&x) else { continue };
            let (iu, iv) = (pu.round(), pv.round());
            if iu < 0.0 || iv < 0.0 || iu >= k_t.width as f64 || iv >= k_t.height as f64 {
                continue;
            }
            let cell = &mut out.pixel_mut(iu as usize, iv as usize)[0];
            if *cell == 0.0 || (x.z as f32) < *cell {
                *cell = x.z as f32;
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlamConfig {
    pub weights: LossWeights,
    pub event_mode: EventLossMode,
    /// Adaptive partner selection through the previous-index table; when
    /// off, events always couple consecutive frames.
    pub eta: bool,
    pub m_strat: usize,
    pub m_surf: usize,
    pub near: f64,
    pub tr: f64,
    pub n_track: usize,
    pub n_ba: usize,
    pub n_ev_track: usize,
    pub n_ev_ba: usize,
    pub track_iters: usize,
    /// Tracking drops RGB rays whose depth residual at the initial pose
    /// exceeds this multiple of the median; 0 keeps every ray.
    pub track_outlier_factor: f64,
    pub ba_iters: usize,
    pub init_iters: usize,
    pub keyframe_every: usize,
    pub ba_every: usize,
    pub w_d: usize,
    pub w_s: usize,
    pub median_window: usize,
    pub median_factor: f64,
    pub patch_cols: usize,
    pub patch_rows: usize,
    pub lr_rot: f64,
    pub lr_trans: f64,
    pub lr_grid: f64,
    pub lr_decoder: f64,
    pub lr_crf: f64,
    /// Padding of the field domain around the scene bounds, so surfaces on
    /// the bounds still have room behind them.
    pub bounds_margin: f64,
    pub levels: Vec<usize>,
    pub features: usize,
    pub hidden: usize,
    pub crf_enabled: bool,
    pub mapper_uses_h: bool,
    pub scalar_radiance: bool,
    pub seed: u64,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            event_mode: EventLossMode::Normalized,
            eta: true,
            m_strat: 24,
            m_surf: 8,
            near: 0.05,
            tr: 0.05,
            n_track: 1024,
            n_ba: 2048,
            n_ev_track: 512,
            n_ev_ba: 1024,
            track_iters: 10,
            track_outlier_factor: 10.0,
            ba_iters: 10,
            init_iters: 200,
            keyframe_every: 5,
            ba_every: 5,
            w_d: 5,
            w_s: 2,
            median_window: 20,
            median_factor: 1.5,
            patch_cols: 8,
            patch_rows: 8,
            lr_rot: 1e-3,
            lr_trans: 1e-3,
            lr_grid: 1e-2,
            lr_decoder: 1e-3,
            lr_crf: 1e-3,
            bounds_margin: 0.15,
            levels: vec![16, 32, 64],
            features: 2,
            hidden: 32,
            crf_enabled: true,
            mapper_uses_h: false,
            scalar_radiance: false,
            seed: 0,
        }
    }
}

impl SlamConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        if [w.ev, w.rgb, w.d, w.sdf, w.fs].iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidConfig {
                key: "lambda",
                reason: "loss weights must be non-negative",
            });
        }
        if self.w_d == 0 {
            return Err(Error::InvalidConfig {
                key: "w_d",
                reason: "must be at least 1",
            });
        }
        if self.keyframe_every == 0 || self.ba_every == 0 {
            return Err(Error::InvalidConfig {
                key: "keyframe_every",
                reason: "must be at least 1",
            });
        }
        if self.m_strat == 0 {
            return Err(Error::InvalidConfig {
                key: "m_strat",
                reason: "must be at least 1",
            });
        }
        if !(self.tr > 0.0) {
            return Err(Error::InvalidConfig {
                key: "tr",
                reason: "must be positive",
            });
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err(Error::InvalidConfig {
                key: "levels",
                reason: "need at least one positive level",
            });
        }
        if !(self.bounds_margin >= 0.0) {
            return Err(Error::InvalidConfig {
                key: "bounds_margin",
                reason: "must be non-negative",
            });
        }
        if self.patch_cols == 0 || self.patch_rows == 0 {
            return Err(Error::InvalidConfig {
                key: "patch_cols",
                reason: "must be positive",
            });
        }
        Ok(())
    }

    pub fn field_config(&self, bounds: Aabb) -> FieldConfig {
        let mut c = FieldConfig::new(bounds.padded(self.bounds_margin));
        c.levels = self.levels.clone();
        c.features = self.features;
        c.hidden = self.hidden;
        c.crf_enabled = self.crf_enabled;
        c.mapper_uses_h = self.mapper_uses_h;
        c.scalar_radiance = self.scalar_radiance;
        c
    }
}

/// Per-frame record of the final tracking (or initial mapping) loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameLog {
    pub frame: usize,
    pub terms: LossTerms,
    pub prev: Option<usize>,
    /// Tracking diverged and the pose was reset to its initialization.
    pub flagged: bool,
}

/// Result of a full run.
#[derive(Clone, Debug)]
pub struct SlamOutput {
    pub poses: Vec<PoseSE3>,
    pub field: SceneField,
    pub params: ParamVector,
    pub log: Vec<FrameLog>,
    pub table: PrevIndexTable,
    pub keyframes: Vec<usize>,
}

fn mix_seed(seed: u64, stage: u64, frame: u64, iter: u64) -> u64 {
    // splitmix64 over the combined key
    let mut z = seed
        ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ frame.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ iter.wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STAGE_TRACK: u64 = 1;
const STAGE_MAP: u64 = 2;

/// Tracking and mapping state over one sequence.
pub struct Slam<'a> {
    pub config: SlamConfig,
    pub calib: &'a Calibration,
    pub frames: &'a [FrameObs],
    pub events: &'a EventStream,
    pub field: SceneField,
    pub params: ParamVector,
    pub poses: Vec<PoseSE3>,
    pub table: PrevIndexTable,
    pub threshold: LossThreshold,
    pub keyframes: Vec<usize>,
    pub log: Vec<FrameLog>,
    sampling: SamplingConfig,
    rgb_grid: PatchGrid,
    event_grid: PatchGrid,
    patch_loss: Vec<Option<Vec<f64>>>,
    field_adam: Adam,
    ws: Workspace,
    grad: Vec<f64>,
}

impl<'a> Slam<'a> {
    pub fn new(
        config: SlamConfig,
        calib: &'a Calibration,
        frames: &'a [FrameObs],
        events: &'a EventStream,
        bounds: Aabb,
    ) -> Result<Self> {
        config.validate()?;
        if frames.is_empty() {
            return Err(Error::EmptyBatch("frames"));
        }
        for (i, w) in frames.windows(2).enumerate() {
            if w[1].timestamp <= w[0].timestamp {
                return Err(Error::NotIncreasing {
                    what: "frame timestamps",
                    index: i + 1,
                });
            }
        }
        for f in frames {
            let found = (f.rgb.width, f.rgb.height);
            if found != (calib.rgb.width, calib.rgb.height) || (f.depth.width, f.depth.height) != found {
                return Err(Error::ResolutionMismatch {
                    expected: (calib.rgb.width, calib.rgb.height),
                    found,
                });
            }
        }
        if events.resolution() != (calib.event.width, calib.event.height) {
            return Err(Error::ResolutionMismatch {
                expected: (calib.event.width, calib.event.height),
                found: events.resolution(),
            });
        }
        let mut field = SceneField::new(config.field_config(bounds));
        field.log_exposure_ratio = [
            (calib.exposure_rgb / DEFAULT_EXPOSURE).ln(),
            (calib.exposure_event / DEFAULT_EXPOSURE).ln(),
        ];
        let params = field.init_params(config.seed);
        let mut sampling = SamplingConfig::new(bounds.diagonal());
        sampling.m_strat = config.m_strat;
        sampling.m_surf = config.m_surf;
        sampling.near = config.near;
        sampling.tr = config.tr;
        let rgb_grid = PatchGrid::new(config.patch_cols, config.patch_rows, calib.rgb.width, calib.rgb.height);
        let event_grid = PatchGrid::new(calib.mini.width, calib.mini.height, calib.event.width, calib.event.height);
        let n = field.param_len();
        Ok(Self {
            threshold: LossThreshold::new(config.median_window, config.median_factor),
            config,
            calib,
            frames,
            events,
            params,
            poses: vec![PoseSE3::identity(); frames.len()],
            table: PrevIndexTable::new(),
            keyframes: Vec::new(),
            log: Vec::new(),
            sampling,
            rgb_grid,
            event_grid,
            patch_loss: vec![None; frames.len()],
            field_adam: Adam::new(n),
            ws: Workspace::new(),
            grad: vec![0.0; n],
            field,
        })
    }

    pub fn objective(&self) -> Objective<'_> {
        Objective {
            field: &self.field,
            calib: self.calib,
            weights: self.config.weights,
            tr: self.config.tr,
            event_mode: self.config.event_mode,
        }
    }

    fn use_events(&self) -> bool {
        self.config.weights.ev > 0.0
    }

    /// Partner frame of `i` for the event term.
    pub fn partner(&self, i: usize) -> usize {
        if self.config.eta {
            forward_query(&self.table, i, self.config.w_d, self.config.w_s, self.threshold.value())
        } else {
            i - 1
        }
    }

    pub fn rgb_rays(&self, frame: usize, per_patch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<RgbRay>> {
        let f = &self.frames[frame];
        let k = &self.calib.rgb;
        self.rgb_grid
            .stratified(per_patch, rng)
            .into_iter()
            .map(|(u, v)| {
                let px = f.rgb.pixel(u, v);
                let depth = f.depth.get(u, v) as f64;
                let scale = k.backproject(u as f64, v as f64).norm();
                let z = sample_ray(Some(depth * scale), &self.sampling, rng)?;
                Ok(RgbRay {
                    frame,
                    pixel: (u, v),
                    color: [px[0] as f64, px[1] as f64, px[2] as f64],
                    depth,
                    z,
                })
            })
            .collect()
    }

    fn center_depths(&self, frame: usize) -> Vec<f64> {
        let d = &self.frames[frame].depth;
        (0..self.rgb_grid.len())
            .map(|q| {
                let (u, v) = self.rgb_grid.center(q);
                d.get(u, v) as f64
            })
            .collect()
    }

    fn event_rays(
        &self,
        cur: usize,
        prev: usize,
        patch_loss: &[f64],
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<EventRay>> {
        let pixels = pw_sampling(
            &self.rgb_grid,
            patch_loss,
            &self.center_depths(cur),
            &self.calib.rgb,
            &self.calib.mini,
            &self.calib.t_ec,
            &self.event_grid,
            count,
            rng,
        );
        let k = &self.calib.event;
        let (fc, fp) = (&self.frames[cur], &self.frames[prev]);
        pixels
            .into_iter()
            .map(|(u, v)| {
                let n = self.events.accumulate(u, v, fp.timestamp, fc.timestamp)? as f64;
                let scale = k.backproject(u as f64, v as f64).norm();
                let dc = fc.event_depth.get(u, v) as f64 * scale;
                let dp = fp.event_depth.get(u, v) as f64 * scale;
                Ok(EventRay {
                    cur,
                    prev,
                    pixel: (u, v),
                    count: n,
                    z_cur: sample_ray(Some(dc), &self.sampling, rng)?,
                    z_prev: sample_ray(Some(dp), &self.sampling, rng)?,
                })
            })
            .collect()
    }

    fn patch_means(&self, rays: &[RgbRay], losses: &[f64], frame: usize) -> Option<Vec<f64>> {
        let n = self.rgb_grid.len();
        let mut sum = vec![0.0; n];
        let mut cnt = vec![0usize; n];
        for (r, l) in rays.iter().zip(losses) {
            if r.frame == frame {
                let q = self.rgb_grid.patch_of(r.pixel.0, r.pixel.1);
                sum[q] += l;
                cnt[q] += 1;
            }
        }
        if cnt.iter().all(|&c| c == 0) {
            return None;
        }
        Some(
            sum.iter()
                .zip(&cnt)
                .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
                .collect(),
        )
    }

    fn per_patch(&self, rays: usize) -> usize {
        (rays / self.rgb_grid.len()).max(1)
    }

    /// Constant-velocity initialization for frame `i`.
    pub fn initial_pose(&self, i: usize) -> PoseSE3 {
        if i >= 2 {
            PoseSE3::extrapolate(&self.poses[i - 2], &self.poses[i - 1])
        } else {
            self.poses[i - 1]
        }
    }

    /// Estimate the pose of frame `i >= 1` with the field frozen.
    pub fn track_frame(&mut self, i: usize) -> Result<FrameLog> {
        let init = self.initial_pose(i);
        let mut var = PoseVar::new(init);
        let prev = self.partner(i);
        let mut adam = Adam::new(6);
        let mut x = [0.0; 6];
        let mut terms = LossTerms::default();
        let mut flagged = false;
        let mut patch_loss: Option<Vec<f64>> = None;
        let use_events = self.use_events() && self.config.n_ev_track > 0;
        let per_patch = self.per_patch(self.config.n_track);
        let mut mask = vec![false; self.frames.len()];
        mask[i] = true;
        let mut ws = core::mem::take(&mut self.ws);
        // one batch per frame, screened at the initial pose
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, STAGE_TRACK, i as u64, 0));
        self.poses[i] = init;
        let mut batch = Batch {
            rgb: self.rgb_rays(i, per_patch, &mut rng)?,
            events: Vec::new(),
        };
        let probe = self.objective().evaluate(&mut ws, self.params.values(), &self.poses, &batch, None)?;
        if use_events {
            let pl = self
                .patch_means(&batch.rgb, &probe.rgb_ray_loss, i)
                .unwrap_or_else(|| vec![1.0; self.rgb_grid.len()]);
            batch.events = self.event_rays(i, prev, &pl, self.config.n_ev_track, &mut rng)?;
        }
        if self.config.track_outlier_factor > 0.0 {
            batch.rgb = drop_outliers(batch.rgb, &probe.depth_residual, self.config.track_outlier_factor);
        }
        for _ in 0..self.config.track_iters {
            self.poses[i] = var.pose();
            let mut pg = vec![PoseGrad::default(); self.frames.len()];
            let eval = self.objective().evaluate(
                &mut ws,
                self.params.values(),
                &self.poses,
                &batch,
                Some(GradRequest {
                    field: None,
                    poses: Some(&mut pg),
                    pose_mask: &mask,
                }),
            )?;
            let (g_phi, g_rho) = var.chain(&pg[i]);
            let g = [g_phi.x, g_phi.y, g_phi.z, g_rho.x, g_rho.y, g_rho.z];
            if !eval.terms.is_finite() || g.iter().any(|v| !v.is_finite()) {
                var = PoseVar::new(init);
                flagged = true;
                break;
            }
            terms = eval.terms;
            patch_loss = self.patch_means(&batch.rgb, &eval.rgb_ray_loss, i);
            adam.step(&mut x, &g, &[(0..3, self.config.lr_rot), (3..6, self.config.lr_trans)]);
            var.phi = Vec3::new(x[0], x[1], x[2]);
            var.rho = Vec3::new(x[3], x[4], x[5]);
        }
        self.ws = ws;
        self.poses[i] = var.pose();
        self.patch_loss[i] = patch_loss;
        let total = if flagged { f64::INFINITY } else { terms.total };
        self.table.set(
            i,
            TableEntry {
                loss: total,
                cur: i,
                prev: Some(prev),
            },
        );
        self.threshold.push(total);
        Ok(FrameLog {
            frame: i,
            terms,
            prev: Some(prev),
            flagged,
        })
    }

    fn field_groups(&self, scale: f64) -> Vec<(core::ops::Range<usize>, f64)> {
        let layout = self.field.layout();
        let c = &self.config;
        layout
            .segments()
            .iter()
            .zip(self.field.segment_groups())
            .filter_map(|(seg, g)| match g {
                ParamGroup::Grid => Some((seg.range(), c.lr_grid * scale)),
                ParamGroup::Decoder => Some((seg.range(), c.lr_decoder * scale)),
                ParamGroup::Crf if c.crf_enabled => Some((seg.range(), c.lr_crf * scale)),
                ParamGroup::Crf => None,
            })
            .collect()
    }

    /// Joint optimization of the field and all keyframe poses except frame
    /// 0. Returns the loss terms of each iteration (`NaN` total when the
    /// step was rejected).
    pub fn global_ba(&mut self, iters: usize) -> Result<Vec<LossTerms>> {
        let kfs = self.keyframes.clone();
        if kfs.is_empty() {
            return Err(Error::EmptyBatch("keyframes"));
        }
        let nk = kfs.len();
        let mut vars: Vec<PoseVar> = kfs.iter().map(|&f| PoseVar::new(self.poses[f])).collect();
        let mut mask = vec![false; self.frames.len()];
        for &f in &kfs {
            mask[f] = f != 0;
        }
        let mut pose_adam = Adam::new(6 * nk);
        let mut x = vec![0.0; 6 * nk];
        let per_patch = self.per_patch(self.config.n_ba / nk);
        let ev_frames = kfs.iter().filter(|&&f| f >= 1).count();
        let use_events = self.use_events() && self.config.n_ev_ba > 0 && ev_frames > 0;
        let partners: Vec<Option<usize>> = kfs.iter().map(|&f| if f >= 1 { Some(self.partner(f)) } else { None }).collect();
        let mut lr_scale = 1.0;
        let mut history = Vec::with_capacity(iters);
        let mut ws = core::mem::take(&mut self.ws);
        let mut grad = core::mem::take(&mut self.grad);
        let frame_id = *kfs.last().unwrap() as u64;
        for it in 0..iters {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, STAGE_MAP, frame_id, it as u64));
            for (k, &f) in kfs.iter().enumerate() {
                self.poses[f] = vars[k].pose();
            }
            let mut batch = Batch::default();
            for &f in &kfs {
                batch.rgb.extend(self.rgb_rays(f, per_patch, &mut rng)?);
            }
            if use_events {
                let per = (self.config.n_ev_ba / ev_frames).max(1);
                for (k, &f) in kfs.iter().enumerate() {
                    let Some(p) = partners[k] else { continue };
                    let pl = self.patch_loss[f].clone().unwrap_or_else(|| vec![1.0; self.rgb_grid.len()]);
                    batch.events.extend(self.event_rays(f, p, &pl, per, &mut rng)?);
                }
            }
            grad.fill(0.0);
            let mut pg = vec![PoseGrad::default(); self.frames.len()];
            let eval = self.objective().evaluate(
                &mut ws,
                self.params.values(),
                &self.poses,
                &batch,
                Some(GradRequest {
                    field: Some(&mut grad),
                    poses: Some(&mut pg),
                    pose_mask: &mask,
                }),
            )?;
            if !eval.terms.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                lr_scale *= 0.5;
                history.push(LossTerms {
                    total: f64::NAN,
                    ..eval.terms
                });
                continue;
            }
            history.push(eval.terms);
            for &f in &kfs {
                if let Some(pl) = self.patch_means(&batch.rgb, &eval.rgb_ray_loss, f) {
                    self.patch_loss[f] = Some(pl);
                }
            }
            let groups = self.field_groups(lr_scale);
            self.field_adam.step(self.params.values_mut(), &grad, &groups);
            self.field.project(self.params.values_mut());
            let mut g = vec![0.0; 6 * nk];
            let mut pose_groups = Vec::new();
            for (k, &f) in kfs.iter().enumerate() {
                if !mask[f] {
                    continue;
                }
                let (g_phi, g_rho) = vars[k].chain(&pg[f]);
                g[6 * k..6 * k + 3].copy_from_slice(g_phi.as_slice());
                g[6 * k + 3..6 * k + 6].copy_from_slice(g_rho.as_slice());
                pose_groups.push((6 * k..6 * k + 3, self.config.lr_rot * lr_scale));
                pose_groups.push((6 * k + 3..6 * k + 6, self.config.lr_trans * lr_scale));
            }
            pose_adam.step(&mut x, &g, &pose_groups);
            for (k, v) in vars.iter_mut().enumerate() {
                v.phi = Vec3::new(x[6 * k], x[6 * k + 1], x[6 * k + 2]);
                v.rho = Vec3::new(x[6 * k + 3], x[6 * k + 4], x[6 * k + 5]);
            }
        }
        for (k, &f) in kfs.iter().enumerate() {
            self.poses[f] = vars[k].pose();
        }
        self.ws = ws;
        self.grad = grad;
        Ok(history)
    }

    /// Fit the field to frame 0 at its given pose.
    pub fn initialize(&mut self, first_pose: PoseSE3) -> Result<FrameLog> {
        self.poses[0] = first_pose;
        self.keyframes = vec![0];
        let history = self.global_ba(self.config.init_iters)?;
        let terms = history
            .iter()
            .rev()
            .copied()
            .find(|t| t.is_finite())
            .unwrap_or(LossTerms {
                total: f64::INFINITY,
                ..LossTerms::default()
            });
        self.table.set(
            0,
            TableEntry {
                loss: terms.total,
                cur: 0,
                prev: None,
            },
        );
        Ok(FrameLog {
            frame: 0,
            terms,
            prev: None,
            flagged: false,
        })
    }

    /// Process frame `i >= 1`: track, then add a keyframe and run BA on the
    /// configured cadence.
    pub fn step(&mut self, i: usize) -> Result<FrameLog> {
        let log = self.track_frame(i)?;
        if i.is_multiple_of(self.config.keyframe_every) {
            self.keyframes.push(i);
        }
        if i.is_multiple_of(self.config.ba_every) {
            self.global_ba(self.config.ba_iters)?;
        }
        Ok(log)
    }

    /// Run the whole sequence starting from the known pose of frame 0.
    pub fn run(mut self, first_pose: PoseSE3) -> Result<SlamOutput> {
        let log = self.initialize(first_pose)?;
        self.log.push(log);
        for i in 1..self.frames.len() {
            let log = self.step(i)?;
            self.log.push(log);
        }
        Ok(SlamOutput {
            poses: self.poses,
            field: self.field,
            params: self.params,
            log: self.log,
            table: self.table,
            keyframes: self.keyframes,
        })
    }
}
