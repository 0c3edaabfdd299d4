//! Batch loss terms and their gradients.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// How the event loss handles the contrast threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EventLossMode {
    /// Compare `n * C` with the rendered log-luminance change.
    KnownC(f64),
    /// Scale both batch vectors to unit RMS first, removing `C`.
    Normalized,
}

const RMS_EPS: f64 = 1e-12;

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Event loss over a batch of rendered log-luminance changes `delta`
/// (`l_beta - l_alpha`) and accumulated polarities `counts`. `g_delta`
/// receives the gradient with respect to `delta`.
pub fn event_loss(
    delta: &[f64],
    counts: &[f64],
    mode: EventLossMode,
    g_delta: Option<&mut [f64]>,
) -> Result<f64> {
    if delta.is_empty() {
        return Err(Error::EmptyBatch("event loss"));
    }
    let n = delta.len() as f64;
    match mode {
        EventLossMode::KnownC(c) => {
            let mut loss = 0.0;
            for (d, k) in delta.iter().zip(counts) {
                let r = k * c - d;
                loss += r * r;
            }
            if let Some(g) = g_delta {
                for ((gi, d), k) in g.iter_mut().zip(delta).zip(counts) {
                    *gi = -2.0 * (k * c - d) / n;
                }
            }
            Ok(loss / n)
        }
        EventLossMode::Normalized => {
            let rc = rms(counts);
            let rd = (delta.iter().map(|x| x * x).sum::<f64>() / n + RMS_EPS).sqrt();
            let a: Vec<f64> = counts
                .iter()
                .map(|k| if rc > 0.0 { k / rc } else { 0.0 })
                .collect();
            let mut loss = 0.0;
            for (ai, d) in a.iter().zip(delta) {
                let r = ai - d / rd;
                loss += r * r;
            }
            if let Some(g) = g_delta {
                // g_b = dL/db, then through b = delta / rms(delta)
                let mut dot = 0.0;
                for ((gi, ai), d) in g.iter_mut().zip(&a).zip(delta) {
                    *gi = -2.0 * (ai - d / rd) / n;
                    dot += *gi * d;
                }
                let k = dot / (n * rd * rd * rd);
                for (gi, d) in g.iter_mut().zip(delta) {
                    *gi = *gi / rd - d * k;
                }
            }
            Ok(loss / n)
        }
    }
}

/// Color loss: mean over rays and channels jointly.
pub fn rgb_loss(pred: &[[f64; 3]], obs: &[[f64; 3]], g: Option<&mut [[f64; 3]]>) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::EmptyBatch("rgb loss"));
    }
    let n = 3.0 * pred.len() as f64;
    let mut loss = 0.0;
    for (p, o) in pred.iter().zip(obs) {
        for k in 0..3 {
            loss += (p[k] - o[k]) * (p[k] - o[k]);
        }
    }
    if let Some(g) = g {
        for ((gi, p), o) in g.iter_mut().zip(pred).zip(obs) {
            for k in 0..3 {
                gi[k] = 2.0 * (p[k] - o[k]) / n;
            }
        }
    }
    Ok(loss / n)
}

/// Depth loss over rays with valid observations (`obs > 0`); an empty
/// valid set contributes 0.
pub fn depth_loss(pred: &[f64], obs: &[f64], g: Option<&mut [f64]>) -> f64 {
    let n = obs.iter().filter(|&&d| d > 0.0).count();
    if n == 0 {
        if let Some(g) = g {
            g.fill(0.0);
        }
        return 0.0;
    }
    let n = n as f64;
    let mut loss = 0.0;
    for (p, o) in pred.iter().zip(obs) {
        if *o > 0.0 {
            loss += (p - o) * (p - o);
        }
    }
    if let Some(g) = g {
        for ((gi, p), o) in g.iter_mut().zip(pred).zip(obs) {
            *gi = if *o > 0.0 { 2.0 * (p - o) / n } else { 0.0 };
        }
    }
    loss / n
}

/// Role of a sample with respect to the observed surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleRole {
    /// Within `tr` of the observed surface.
    Near,
    /// In observed free space in front of the surface.
    Free,
    /// Behind the surface band; unsupervised.
    Excluded,
}

/// Classify a sample at range `z` on a ray with observed range `d`.
pub fn sample_role(z: f64, d: f64, tr: f64) -> SampleRole {
    if !(d > 0.0) {
        SampleRole::Excluded
    } else if (d - z).abs() <= tr {
        SampleRole::Near
    } else if z < d - tr {
        SampleRole::Free
    } else {
        SampleRole::Excluded
    }
}

/// Truncated-SDF supervision accumulated over a batch. Sample counts are
/// fixed before evaluation so that each ray's contribution can be
/// differentiated on its own.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SdfTerms {
    pub near_count: usize,
    pub free_count: usize,
}

impl SdfTerms {
    pub fn count(&mut self, z: &[f64], d: f64, tr: f64) {
        for &zi in z {
            match sample_role(zi, d, tr) {
                SampleRole::Near => self.near_count += 1,
                SampleRole::Free => self.free_count += 1,
                SampleRole::Excluded => {}
            }
        }
    }

    /// Contributions `(sdf, fs)` of one ray to the batch means, with the
    /// weighted gradient with respect to each sample TSDF written to `g_s`.
    pub fn ray(
        &self,
        z: &[f64],
        s: &[f64],
        d: f64,
        tr: f64,
        lambda: (f64, f64),
        g_s: Option<&mut [f64]>,
    ) -> (f64, f64) {
        let mut sdf = 0.0;
        let mut fs = 0.0;
        let nn = self.near_count.max(1) as f64;
        let nf = self.free_count.max(1) as f64;
        let mut g_s = g_s;
        for i in 0..z.len() {
            let (term, g) = match sample_role(z[i], d, tr) {
                SampleRole::Near => {
                    let r = s[i] - (d - z[i]) / tr;
                    sdf += r * r / nn;
                    (r * r, lambda.0 * 2.0 * r / nn)
                }
                SampleRole::Free => {
                    let r = s[i] - 1.0;
                    fs += r * r / nf;
                    (r * r, lambda.1 * 2.0 * r / nf)
                }
                SampleRole::Excluded => (0.0, 0.0),
            };
            let _ = term;
            if let Some(gs) = g_s.as_deref_mut() {
                gs[i] = g;
            }
        }
        (sdf, fs)
    }
}
