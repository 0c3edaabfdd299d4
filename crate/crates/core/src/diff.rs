//! Flat parameter vectors with named segments, the differentiable
//! primitives used by the pipeline, and finite-difference gradient checks.
//!
//! The pipeline does not record a tape. Each stage (grid interpolation,
//! decoder, CRF mappers, rendering, losses) has a hand-written backward that
//! mirrors its forward, and everything here exists to validate those.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};

/// One named, shaped block of a [`ParamVector`].
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Segment table. Offsets partition `0..len` exactly, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Layout {
    segments: Vec<Segment>,
    len: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a segment and return its index.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let seg = Segment {
            name: name.into(),
            offset: self.len,
            shape: shape.to_vec(),
        };
        self.len += seg.len();
        self.segments.push(seg);
        self.segments.len() - 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, index: usize) -> &Segment {
        &self.segments[index]
    }

    pub fn find(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// Segment containing a flat index, with the offset inside it.
    pub fn locate(&self, index: usize) -> Option<(&Segment, usize)> {
        let pos = self
            .segments
            .partition_point(|s| s.offset + s.len() <= index);
        self.segments
            .get(pos)
            .filter(|s| s.range().contains(&index))
            .map(|s| (s, index - s.offset))
    }

    /// Concatenate two layouts, prefixing nothing; offsets of `other` shift.
    pub fn concat(&self, other: &Layout) -> Layout {
        let mut out = self.clone();
        for s in &other.segments {
            out.push(s.name.clone(), &s.shape);
        }
        out
    }
}

/// Flat real-valued parameter vector with a shared segment layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Self {
        assert_eq!(layout.len(), values.len(), "values do not match layout");
        Self { layout, values }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.find(name).map(|s| &self.values[s.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.find(name)?.range();
        Some(&mut self.values[range])
    }

    /// First non-finite entry, reported by segment name.
    pub fn check_finite(&self, primitive: &'static str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite {
                primitive,
                segment: self.describe_index(i),
            }),
        }
    }

    pub fn describe_index(&self, index: usize) -> String {
        match self.layout.locate(index) {
            Some((seg, off)) => alloc::format!("{}[{}]", seg.name, off),
            None => index.to_string(),
        }
    }
}

/// A scalar loss over a flat parameter slice.
///
/// `grad`, when present, has the parameter length and is overwritten with the
/// gradient. The returned loss must not depend on whether `grad` is requested.
pub trait Workload {
    fn evaluate(&self, params: &[f64], grad: Option<&mut [f64]>) -> Result<f64>;
}

impl<F> Workload for F
where
    F: Fn(&[f64], Option<&mut [f64]>) -> Result<f64>,
{
    fn evaluate(&self, params: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        self(params, grad)
    }
}

/// Loss and gradient; the gradient shares the parameter layout.
pub fn evaluate_with_gradient<W: Workload + ?Sized>(
    params: &ParamVector,
    workload: &W,
) -> Result<(f64, ParamVector)> {
    let mut grad = ParamVector::zeros(params.layout.clone());
    let loss = workload.evaluate(params.values(), Some(grad.values_mut()))?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            primitive: "loss",
            segment: "total".into(),
        });
    }
    grad.check_finite("gradient")?;
    Ok((loss, grad))
}

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `segment[offset]` of the worst coordinate.
    pub worst_index: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub fd_step: f64,
    pub checked: usize,
}

/// Relative error with a floor tied to the overall gradient scale, so that
/// coordinates whose true derivative is ~0 are judged against rounding noise
/// of the dominant ones rather than against themselves.
pub fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6 * scale).max(1e-300);
    (analytic - numeric).abs() / denom
}

/// Central-difference check over `sample_count` coordinates drawn without
/// replacement.
pub fn finite_difference_check<W: Workload + ?Sized, R: Rng + ?Sized>(
    params: &ParamVector,
    workload: &W,
    step: f64,
    sample_count: usize,
    rng: &mut R,
) -> Result<GradCheckReport> {
    if params.is_empty() {
        return Err(Error::EmptyParameterSpace);
    }
    let count = sample_count.min(params.len());
    let indices = rand::seq::index::sample(rng, params.len(), count).into_vec();
    finite_difference_check_indices(params, workload, step, &indices)
}

/// Central-difference check on an explicit list of coordinates.
pub fn finite_difference_check_indices<W: Workload + ?Sized>(
    params: &ParamVector,
    workload: &W,
    step: f64,
    indices: &[usize],
) -> Result<GradCheckReport> {
    if params.is_empty() {
        return Err(Error::EmptyParameterSpace);
    }
    if step <= 0.0 {
        return Err(Error::Domain {
            op: "finite_difference_check step",
            value: step,
        });
    }
    let (_, grad) = evaluate_with_gradient(params, workload)?;
    let scale = indices
        .iter()
        .map(|&i| grad.values()[i].abs())
        .fold(0.0, f64::max);
    let mut probe = params.values().to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        fd_step: step,
        checked: indices.len(),
    };
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + step;
        let fp = workload.evaluate(&probe, None)?;
        probe[i] = orig - step;
        let fm = workload.evaluate(&probe, None)?;
        probe[i] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        let analytic = grad.values()[i];
        let err = relative_error(analytic, numeric, scale);
        if err > report.max_rel_error || report.worst_index.is_empty() {
            report.max_rel_error = err;
            report.worst_index = params.describe_index(i);
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Primitives. Derivatives of sigmoid-family activations are taken from the
// cached forward value.

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// d sigmoid / dx from the forward value.
#[inline]
pub fn sigmoid_grad(value: f64) -> f64 {
    value * (1.0 - value)
}

/// `ln(1 + e^x)`, overflow-safe.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(softplus(x))`, accurate for very negative `x`.
#[inline]
pub fn ln_softplus(x: f64) -> f64 {
    if x < -30.0 {
        x
    } else {
        softplus(x).ln()
    }
}

#[inline]
pub fn tanh_grad(value: f64) -> f64 {
    1.0 - value * value
}

/// `out = W x + b` with `W` row-major `(out.len(), x.len())`.
#[inline]
pub fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(n_in).zip(b)) {
        // four independent partial sums so the loop vectorizes
        let mut lanes = [0.0f64; 4];
        let (rc, xc) = (row.chunks_exact(4), x.chunks_exact(4));
        let (rr, xr) = (rc.remainder(), xc.remainder());
        for (r4, x4) in rc.zip(xc) {
            for k in 0..4 {
                lanes[k] += r4[k] * x4[k];
            }
        }
        let mut acc = *bias + ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]));
        for (wi, xi) in rr.iter().zip(xr) {
            acc += wi * xi;
        }
        *o = acc;
    }
}

/// Backward of [`affine`]: accumulates into `g_w`/`g_b` when given and
/// overwrites `g_x` when given.
#[inline]
pub fn affine_backward(
    w: &[f64],
    x: &[f64],
    g_out: &[f64],
    grads: Option<(&mut [f64], &mut [f64])>,
    g_x: Option<&mut [f64]>,
) {
    let n_in = x.len();
    if let Some((g_w, g_b)) = grads {
        for ((row, gb), g) in g_w.chunks_exact_mut(n_in).zip(g_b.iter_mut()).zip(g_out) {
            if *g == 0.0 {
                continue;
            }
            *gb += g;
            for (gw, xi) in row.iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
    }
    if let Some(g_x) = g_x {
        g_x.iter_mut().for_each(|v| *v = 0.0);
        for (row, g) in w.chunks_exact(n_in).zip(g_out) {
            if *g == 0.0 {
                continue;
            }
            for (gx, wi) in g_x.iter_mut().zip(row) {
                *gx += g * wi;
            }
        }
    }
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse(pred: &[f64], target: &[f64], g_pred: Option<&mut [f64]>) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::EmptyBatch("mse"));
    }
    let n = pred.len() as f64;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    if let Some(g) = g_pred {
        for ((gi, p), t) in g.iter_mut().zip(pred).zip(target) {
            *gi = 2.0 * (p - t) / n;
        }
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad_layout(n: usize) -> Arc<Layout> {
        let mut l = Layout::new();
        l.push("p", &[n]);
        Arc::new(l)
    }

    #[test]
    fn layout_partitions_exactly() {
        let mut l = Layout::new();
        l.push("a", &[2, 3]);
        l.push("b", &[4]);
        l.push("c", &[1]);
        let mut next = 0;
        for s in l.segments() {
            assert_eq!(s.offset, next);
            next += s.len();
        }
        assert_eq!(next, l.len());
        assert_eq!(l.locate(7).map(|(s, o)| (s.name.as_str(), o)), Some(("b", 1)));
        assert_eq!(l.locate(10).map(|(s, o)| (s.name.as_str(), o)), Some(("c", 0)));
        assert!(l.locate(11).is_none());
    }

    #[test]
    fn constant_workload_has_zero_gradient() {
        let p = ParamVector::from_values(quad_layout(3), vec![0.3, -1.0, 2.0]);
        let w = |_: &[f64], g: Option<&mut [f64]>| -> Result<f64> {
            if let Some(g) = g {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            Ok(4.2)
        };
        let (loss, grad) = evaluate_with_gradient(&p, &w).unwrap();
        assert_eq!(loss, 4.2);
        assert!(grad.values().iter().all(|&v| v == 0.0));
    }

    fn sq_norm(p: &[f64], g: Option<&mut [f64]>) -> Result<f64> {
        if let Some(g) = g {
            for (gi, pi) in g.iter_mut().zip(p) {
                *gi = 2.0 * pi;
            }
        }
        Ok(p.iter().map(|v| v * v).sum())
    }

    #[test]
    fn squared_norm_gradient() {
        let p = ParamVector::from_values(quad_layout(2), vec![1.0, 2.0]);
        let (loss, grad) = evaluate_with_gradient(&p, &sq_norm).unwrap();
        assert_eq!(loss, 5.0);
        assert_eq!(grad.values(), &[2.0, 4.0]);
    }

    #[test]
    fn quadratic_passes_fd_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..6).map(|i| 1.0 + 0.5 * (i as f64 * 0.37).sin()).collect();
        let p = ParamVector::from_values(quad_layout(6), vals);
        let r = finite_difference_check(&p, &sq_norm, 1e-6, 6, &mut rng).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.checked, 6);
    }

    #[test]
    fn empty_parameter_space_is_rejected() {
        let p = ParamVector::zeros(Arc::new(Layout::new()));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            finite_difference_check(&p, &sq_norm, 1e-6, 0, &mut rng),
            Err(Error::EmptyParameterSpace)
        );
    }

    #[test]
    fn non_finite_gradient_names_segment() {
        let mut l = Layout::new();
        l.push("grid.l0", &[2]);
        l.push("decoder.w0", &[2]);
        let p = ParamVector::zeros(Arc::new(l));
        let w = |_: &[f64], g: Option<&mut [f64]>| -> Result<f64> {
            if let Some(g) = g {
                g[3] = f64::NAN;
            }
            Ok(1.0)
        };
        match evaluate_with_gradient(&p, &w) {
            Err(Error::NonFinite { segment, .. }) => assert_eq!(segment, "decoder.w0[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn scalar_primitive_derivatives() {
        for i in 0..200 {
            let x = (i as f64 - 100.0) * 0.07 + 0.013;
            let s = sigmoid(x);
            let num = central(sigmoid, x);
            assert!((sigmoid_grad(s) - num).abs() <= 1e-6 * num.abs().max(1e-3));
            let num = central(softplus, x);
            assert!((sigmoid(x) - num).abs() <= 1e-6 * num.abs().max(1e-3));
            let t = x.tanh();
            let num = central(f64::tanh, x);
            assert!((tanh_grad(t) - num).abs() <= 1e-6 * num.abs().max(1e-3));
            let num = central(ln_softplus, x);
            let ana = sigmoid(x) / softplus(x);
            assert!((ana - num).abs() <= 1e-6 * num.abs().max(1e-3));
        }
        assert_eq!(ln_softplus(-100.0), -100.0);
        assert!(softplus(1000.0).is_finite());
    }

    #[test]
    fn affine_backward_matches_fd() {
        let w: Vec<f64> = (0..12).map(|i| (i as f64 * 0.91).cos()).collect();
        let b = [0.1, -0.2, 0.3];
        let x = [0.5, -1.5, 0.25, 2.0];
        let g_out = [0.7, -0.3, 1.1];
        let f = |w: &[f64], x: &[f64]| {
            let mut o = [0.0; 3];
            affine(w, &b, x, &mut o);
            o.iter().zip(&g_out).map(|(a, g)| a * g).sum::<f64>()
        };
        let mut gw = vec![0.0; 12];
        let mut gb = vec![0.0; 3];
        let mut gx = vec![0.0; 4];
        affine_backward(&w, &x, &g_out, Some((&mut gw, &mut gb)), Some(&mut gx));
        let h = 1e-6;
        for i in 0..12 {
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let num = (f(&wp, &x) - f(&wm, &x)) / (2.0 * h);
            assert!((num - gw[i]).abs() < 1e-8);
        }
        for i in 0..4 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let num = (f(&w, &xp) - f(&w, &xm)) / (2.0 * h);
            assert!((num - gx[i]).abs() < 1e-8);
        }
        assert_eq!(gb, g_out);
    }

    #[test]
    fn mse_gradient_and_empty() {
        let mut g = [0.0; 2];
        let l = mse(&[1.0, 3.0], &[0.0, 1.0], Some(&mut g)).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g, [1.0, 2.0]);
        assert_eq!(mse(&[], &[], None), Err(Error::EmptyBatch("mse")));
    }
}
