//! The shared scene representation: geometry and color feature grids, one
//! geometry decoder producing hidden features, radiance and TSDF, and two
//! response mappers turning radiance into RGB color and event log-luminance.

pub mod crf;
pub mod decoder;
pub mod grid;

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{ln_softplus, sigmoid, softplus, tanh_grad, Layout, ParamVector};
use crate::geometry::{Aabb, Vec3};
use crate::image::LUMA;

pub use crf::{CrfMapper, CrfScratch};
pub use decoder::{Activation, Mlp, MlpScratch};
pub use grid::{GridLevel, Stencil};

/// Bound of the learned log-exposure offsets, log units.
pub const EXPOSURE_RANGE: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfig {
    pub bounds: Aabb,
    /// Cells per axis of each grid level.
    pub levels: Vec<usize>,
    /// Feature width per level and grid family.
    pub features: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    /// Width of the hidden feature `h`.
    pub h_width: usize,
    pub crf_hidden: usize,
    /// Feed `h` to the mappers in addition to the log exposures.
    pub mapper_uses_h: bool,
    /// One radiance channel instead of three.
    pub scalar_radiance: bool,
    /// When false, mappers and exposure offsets stay frozen at identity.
    pub crf_enabled: bool,
    /// Half-width of the initial uniform grid features.
    pub grid_init: f64,
}

impl FieldConfig {
    pub fn new(bounds: Aabb) -> Self {
        Self {
            bounds,
            levels: vec![16, 32, 64],
            features: 2,
            hidden: 32,
            hidden_layers: 2,
            activation: Activation::Relu,
            h_width: 16,
            crf_hidden: 16,
            mapper_uses_h: false,
            scalar_radiance: false,
            crf_enabled: true,
            grid_init: 1e-2,
        }
    }

    pub fn radiance_channels(&self) -> usize {
        if self.scalar_radiance {
            1
        } else {
            3
        }
    }
}

/// Optimizer group of a parameter segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Grid,
    Decoder,
    Crf,
}

/// Post-mapper values at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldSample {
    /// TSDF in `[-1, 1]`, truncation units.
    pub s: f64,
    pub color: [f64; 3],
    /// Event-camera log-luminance.
    pub lum: f64,
}

/// Upstream gradient with respect to a [`FieldSample`].
pub type SampleGrad = FieldSample;

/// Decoder outputs before the mappers.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryOut {
    pub h: Vec<f64>,
    /// Radiance per channel (a single value repeated when scalar).
    pub e: [f64; 3],
    pub s: f64,
}

/// Per-point state of the forward pass, reused by the backward pass.
#[derive(Clone, Debug)]
pub struct FieldScratch {
    stencils: Vec<Stencil>,
    feats: Vec<f64>,
    g_feats: Vec<f64>,
    mlp: MlpScratch,
    g_dec: Vec<f64>,
    crf_c: CrfScratch,
    crf_l: CrfScratch,
    u_c: Vec<f64>,
    u_l: Vec<f64>,
    g_u_c: Vec<f64>,
    g_u_l: Vec<f64>,
    ln_e: [f64; 3],
    luma_share: [f64; 3],
    s: f64,
    /// The last query point lay outside the grid domain.
    pub clamped: bool,
}

/// Structure and layout of the field; parameter values live in a
/// [`ParamVector`] with [`SceneField::layout`].
#[derive(Clone, Debug)]
pub struct SceneField {
    config: FieldConfig,
    grids: Vec<GridLevel>,
    layout: Arc<Layout>,
    geo_off: Vec<usize>,
    color_off: Vec<usize>,
    decoder: Mlp,
    decoder_off: usize,
    crf_c: CrfMapper,
    crf_c_off: usize,
    crf_l: CrfMapper,
    crf_l_off: usize,
    exposure_off: usize,
    groups: Vec<ParamGroup>,
    /// `ln(exposure / reference)` of the color and event cameras.
    pub log_exposure_ratio: [f64; 2],
}

impl SceneField {
    pub fn new(config: FieldConfig) -> Self {
        let ch = config.radiance_channels();
        let grids: Vec<GridLevel> = config
            .levels
            .iter()
            .map(|&n| GridLevel::new(n, config.features, config.bounds))
            .collect();
        let mut layout = Layout::new();
        let push = |layout: &mut Layout, name: String, shape: &[usize]| {
            let i = layout.push(name, shape);
            layout.segment(i).offset
        };
        let mut groups = Vec::new();
        let mut geo_off = Vec::new();
        let mut color_off = Vec::new();
        for (family, offs) in [("geometry", &mut geo_off), ("color", &mut color_off)] {
            for (l, g) in grids.iter().enumerate() {
                let n = g.vertices_per_axis();
                offs.push(push(&mut layout, format!("grid.{family}.{l}"), &[n, n, n, g.features]));
                groups.push(ParamGroup::Grid);
            }
        }
        let n_in = 2 * config.features * grids.len();
        let mut sizes = vec![n_in];
        sizes.extend(core::iter::repeat_n(config.hidden, config.hidden_layers));
        sizes.push(config.h_width + ch + 1);
        let decoder = Mlp::new(&sizes, config.activation);
        let mut decoder_off = 0;
        for l in 0..decoder.layers() {
            let (r, c) = decoder.weight_shape(l);
            let o = push(&mut layout, format!("decoder.{l}.weight"), &[r, c]);
            if l == 0 {
                decoder_off = o;
            }
            layout.push(format!("decoder.{l}.bias"), &[r]);
            groups.extend([ParamGroup::Decoder, ParamGroup::Decoder]);
        }
        let extra = if config.mapper_uses_h { config.h_width } else { 0 };
        let crf_c = CrfMapper::new(3, extra, config.crf_hidden, true);
        let crf_l = CrfMapper::new(1, extra, config.crf_hidden, false);
        let mut crf_offs = [0usize; 2];
        for (i, (name, m)) in [("color", &crf_c), ("luminance", &crf_l)].iter().enumerate() {
            for (j, (part, shape)) in m.segments().iter().enumerate() {
                let o = push(&mut layout, format!("crf.{name}.{part}"), shape);
                if j == 0 {
                    crf_offs[i] = o;
                }
                groups.push(ParamGroup::Crf);
            }
        }
        let exposure_off = push(&mut layout, "exposure".into(), &[2]);
        groups.push(ParamGroup::Crf);
        Self {
            config,
            grids,
            layout: Arc::new(layout),
            geo_off,
            color_off,
            decoder,
            decoder_off,
            crf_c,
            crf_c_off: crf_offs[0],
            crf_l,
            crf_l_off: crf_offs[1],
            exposure_off,
            groups,
            log_exposure_ratio: [0.0; 2],
        }
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn grids(&self) -> &[GridLevel] {
        &self.grids
    }

    /// Optimizer group of each layout segment, in layout order.
    pub fn segment_groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn param_len(&self) -> usize {
        self.layout.len()
    }

    fn crf_range(&self) -> core::ops::Range<usize> {
        self.crf_c_off..self.exposure_off + 2
    }

    /// Random grids and decoder, identity-initialised mappers, zero
    /// exposure offsets.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamVector::zeros(self.layout.clone());
        let v = p.values_mut();
        let r = self.config.grid_init;
        let grid_end = self.decoder_off;
        for x in &mut v[..grid_end] {
            *x = if r > 0.0 { rng.gen_range(-r..r) } else { 0.0 };
        }
        let dec = &mut v[self.decoder_off..self.decoder_off + self.decoder.param_len()];
        for l in 0..self.decoder.layers() {
            let (rows, cols) = self.decoder.weight_shape(l);
            let a = (6.0 / (rows + cols) as f64).sqrt();
            for w in &mut dec[self.decoder.weight_range(l)] {
                *w = rng.gen_range(-a..a);
            }
        }
        let (cc, cl) = (self.crf_c_off, self.crf_l_off);
        if self.config.crf_enabled {
            self.crf_c.init(&mut v[cc..], &mut rng);
            self.crf_l.init(&mut v[cl..], &mut rng);
        } else {
            self.crf_c.set_identity(&mut v[cc..]);
            self.crf_l.set_identity(&mut v[cl..]);
        }
        p
    }

    /// Keep the mapper weights monotone; call after every parameter update.
    pub fn project(&self, params: &mut [f64]) {
        self.crf_c.project(&mut params[self.crf_c_off..]);
        self.crf_l.project(&mut params[self.crf_l_off..]);
    }

    /// Learned plus calibrated log exposures `(ln dt_c, ln dt_l)`.
    pub fn log_exposures(&self, params: &[f64]) -> [f64; 2] {
        let e = &params[self.exposure_off..self.exposure_off + 2];
        [
            self.log_exposure_ratio[0] + EXPOSURE_RANGE * e[0].tanh(),
            self.log_exposure_ratio[1] + EXPOSURE_RANGE * e[1].tanh(),
        ]
    }

    pub fn scratch(&self) -> FieldScratch {
        let n_feat = 2 * self.config.features * self.grids.len();
        FieldScratch {
            stencils: vec![Stencil::default(); self.grids.len()],
            feats: vec![0.0; n_feat],
            g_feats: vec![0.0; n_feat],
            mlp: self.decoder.scratch(),
            g_dec: vec![0.0; *self.decoder.sizes().last().unwrap()],
            crf_c: self.crf_c.scratch(),
            crf_l: self.crf_l.scratch(),
            u_c: vec![0.0; self.crf_c.inputs()],
            u_l: vec![0.0; self.crf_l.inputs()],
            g_u_c: vec![0.0; self.crf_c.inputs()],
            g_u_l: vec![0.0; self.crf_l.inputs()],
            ln_e: [0.0; 3],
            luma_share: [0.0; 3],
            s: 0.0,
            clamped: false,
        }
    }

    fn geometry_forward(&self, params: &[f64], x: &Vec3, sc: &mut FieldScratch) {
        let f = self.config.features;
        let half = f * self.grids.len();
        sc.clamped = false;
        for (l, g) in self.grids.iter().enumerate() {
            let st = g.stencil(x);
            sc.clamped |= st.clamped;
            g.interpolate(&params[self.geo_off[l]..], &st, &mut sc.feats[l * f..(l + 1) * f]);
            g.interpolate(
                &params[self.color_off[l]..],
                &st,
                &mut sc.feats[half + l * f..half + (l + 1) * f],
            );
            sc.stencils[l] = st;
        }
        let dec = &params[self.decoder_off..self.decoder_off + self.decoder.param_len()];
        self.decoder.forward(dec, &sc.feats, &mut sc.mlp);
    }

    /// TSDF only (grids and decoder).
    pub fn sdf(&self, params: &[f64], x: &Vec3, sc: &mut FieldScratch) -> f64 {
        self.geometry_forward(params, x, sc);
        self.decoder.output(&sc.mlp)[self.config.h_width + self.config.radiance_channels()].tanh()
    }

    /// Hidden feature, radiance and TSDF at `x`.
    pub fn query_geometry(&self, params: &[f64], x: &Vec3, sc: &mut FieldScratch) -> GeometryOut {
        self.geometry_forward(params, x, sc);
        let out = self.decoder.output(&sc.mlp);
        let hw = self.config.h_width;
        let ch = self.config.radiance_channels();
        let mut e = [0.0; 3];
        for k in 0..3 {
            e[k] = softplus(out[hw + k.min(ch - 1)]);
        }
        GeometryOut {
            h: out[..hw].to_vec(),
            e,
            s: out[hw + ch].tanh(),
        }
    }

    /// Color mapper applied to log radiance (and `h` when configured).
    pub fn map_color(&self, params: &[f64], ln_e: &[f64; 3], h: &[f64], sc: &mut FieldScratch) -> [f64; 3] {
        let ln_dt = self.log_exposures(params)[0];
        for k in 0..3 {
            sc.u_c[k] = ln_e[k] + ln_dt;
        }
        if self.config.mapper_uses_h {
            sc.u_c[3..].copy_from_slice(h);
        }
        let o = self.crf_c.forward(&params[self.crf_c_off..], &sc.u_c, &mut sc.crf_c);
        [o[0], o[1], o[2]]
    }

    /// Luminance mapper applied to a log luminance (and `h`).
    pub fn map_luminance(&self, params: &[f64], ln_luma: f64, h: &[f64], sc: &mut FieldScratch) -> f64 {
        let ln_dt = self.log_exposures(params)[1];
        sc.u_l[0] = ln_luma + ln_dt;
        if self.config.mapper_uses_h {
            sc.u_l[1..].copy_from_slice(h);
        }
        self.crf_l.forward(&params[self.crf_l_off..], &sc.u_l, &mut sc.crf_l)[0]
    }

    /// Full query; `sc` keeps what [`SceneField::backward`] needs.
    pub fn forward(&self, params: &[f64], x: &Vec3, sc: &mut FieldScratch) -> FieldSample {
        self.geometry_forward(params, x, sc);
        let hw = self.config.h_width;
        let ch = self.config.radiance_channels();
        let [ln_dt_c, ln_dt_l] = self.log_exposures(params);
        let out = self.decoder.output(&sc.mlp);
        for k in 0..3 {
            sc.ln_e[k] = ln_softplus(out[hw + k.min(ch - 1)]);
        }
        sc.s = out[hw + ch].tanh();
        let ln_luma = if ch == 1 {
            sc.luma_share = [1.0, 0.0, 0.0];
            sc.ln_e[0]
        } else {
            // log-sum-exp of the luma-weighted radiance
            let m = sc.ln_e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..3 {
                sc.luma_share[k] = LUMA[k] * (sc.ln_e[k] - m).exp();
                total += sc.luma_share[k];
            }
            for k in 0..3 {
                sc.luma_share[k] /= total;
            }
            m + total.ln()
        };
        for k in 0..3 {
            sc.u_c[k] = sc.ln_e[k] + ln_dt_c;
        }
        sc.u_l[0] = ln_luma + ln_dt_l;
        if self.config.mapper_uses_h {
            sc.u_c[3..].copy_from_slice(&out[..hw]);
            sc.u_l[1..].copy_from_slice(&out[..hw]);
        }
        let c = self.crf_c.forward(&params[self.crf_c_off..], &sc.u_c, &mut sc.crf_c);
        let color = [c[0], c[1], c[2]];
        let lum = self.crf_l.forward(&params[self.crf_l_off..], &sc.u_l, &mut sc.crf_l)[0];
        FieldSample {
            s: sc.s,
            color,
            lum,
        }
    }

    /// Backward of the last [`SceneField::forward`] held in `sc`. Parameter
    /// gradients accumulate into `grad` when given; the point gradient
    /// accumulates into `g_x` when given.
    pub fn backward(
        &self,
        params: &[f64],
        sc: &mut FieldScratch,
        g: &SampleGrad,
        mut grad: Option<&mut [f64]>,
        g_x: Option<&mut Vec3>,
    ) {
        let hw = self.config.h_width;
        let ch = self.config.radiance_channels();
        let train_crf = self.config.crf_enabled;
        self.crf_l.backward(
            &params[self.crf_l_off..],
            &mut sc.crf_l,
            &[g.lum],
            if train_crf { grad.as_deref_mut().map(|g| &mut g[self.crf_l_off..]) } else { None },
            &mut sc.g_u_l,
        );
        self.crf_c.backward(
            &params[self.crf_c_off..],
            &mut sc.crf_c,
            &g.color,
            if train_crf { grad.as_deref_mut().map(|g| &mut g[self.crf_c_off..]) } else { None },
            &mut sc.g_u_c,
        );
        if train_crf {
            if let Some(gr) = grad.as_deref_mut() {
                let e = &params[self.exposure_off..self.exposure_off + 2];
                let g_dt_c: f64 = sc.g_u_c[..3].iter().sum();
                gr[self.exposure_off] += g_dt_c * EXPOSURE_RANGE * tanh_grad(e[0].tanh());
                gr[self.exposure_off + 1] += sc.g_u_l[0] * EXPOSURE_RANGE * tanh_grad(e[1].tanh());
            }
        }
        // decoder output gradient: [h | raw e | raw s]
        let out = self.decoder.output(&sc.mlp);
        sc.g_dec.fill(0.0);
        if self.config.mapper_uses_h {
            for i in 0..hw {
                sc.g_dec[i] = sc.g_u_c[3 + i] + sc.g_u_l[1 + i];
            }
        }
        let mut g_ln_e = [0.0; 3];
        for k in 0..3 {
            g_ln_e[k] = sc.g_u_c[k] + sc.g_u_l[0] * sc.luma_share[k];
        }
        for k in 0..3 {
            let c = k.min(ch - 1);
            let raw = out[hw + c];
            // d ln softplus(r) / dr = sigmoid(r) / softplus(r)
            let d = if raw < -30.0 { 1.0 } else { sigmoid(raw) / softplus(raw) };
            sc.g_dec[hw + c] += g_ln_e[k] * d;
        }
        sc.g_dec[hw + ch] = g.s * tanh_grad(sc.s);
        let dec_len = self.decoder.param_len();
        let dec_grad = grad
            .as_deref_mut()
            .map(|gr| &mut gr[self.decoder_off..self.decoder_off + dec_len]);
        self.decoder.backward(
            &params[self.decoder_off..self.decoder_off + dec_len],
            &mut sc.mlp,
            &sc.g_dec,
            dec_grad,
            Some(&mut sc.g_feats),
        );
        let f = self.config.features;
        let half = f * self.grids.len();
        let mut gx_acc = Vec3::zeros();
        let want_x = g_x.is_some();
        for (l, gl) in self.grids.iter().enumerate() {
            let st = &sc.stencils[l];
            for (off, base) in [(self.geo_off[l], l * f), (self.color_off[l], half + l * f)] {
                let gf = &sc.g_feats[base..base + f];
                match grad.as_deref_mut() {
                    Some(gr) => gl.backward(
                        &params[off..],
                        st,
                        gf,
                        &mut gr[off..],
                        if want_x { Some(&mut gx_acc) } else { None },
                    ),
                    None if want_x => point_grad(gl, &params[off..], st, gf, &mut gx_acc),
                    None => {}
                }
            }
        }
        if let Some(gx) = g_x {
            *gx += gx_acc;
        }
    }

    /// Names of the parameter segments, for diagnostics and checkpoints.
    pub fn segment_names(&self) -> Vec<String> {
        self.layout.segments().iter().map(|s| s.name.clone()).collect()
    }

    /// Range of the mapper and exposure parameters.
    pub fn crf_params(&self) -> core::ops::Range<usize> {
        self.crf_range()
    }
}

fn point_grad(gl: &GridLevel, params: &[f64], st: &Stencil, gf: &[f64], gx: &mut Vec3) {
    let f = gl.features;
    for c in 0..8 {
        let base = st.vertex[c] * f;
        let mut dot = 0.0;
        for k in 0..f {
            dot += params[base + k] * gf[k];
        }
        for a in 0..3 {
            gx[a] += st.dweight[c][a] * dot;
        }
    }
}
