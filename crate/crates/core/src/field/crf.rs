//! Learned monotone camera response mappers.
//!
//! `out_k = gain_k u_k + sum_j V_kj tanh(W u + b)_j + bias_k`, followed by a
//! sigmoid for the color camera. The first `channels` inputs are log
//! exposures; `gain`, `V` and the matching columns of `W` are kept
//! non-negative, which makes every output non-decreasing in each of them.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::diff::{sigmoid, sigmoid_grad, tanh_grad};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrfMapper {
    pub channels: usize,
    /// Extra unconstrained inputs appended after the log exposures.
    pub extra: usize,
    pub hidden: usize,
    pub sigmoid_output: bool,
}

#[derive(Clone, Debug, Default)]
pub struct CrfScratch {
    u: Vec<f64>,
    a: Vec<f64>,
    out: Vec<f64>,
    g_a: Vec<f64>,
}

impl CrfMapper {
    pub fn new(channels: usize, extra: usize, hidden: usize, sigmoid_output: bool) -> Self {
        assert!((1..=3).contains(&channels));
        Self {
            channels,
            extra,
            hidden,
            sigmoid_output,
        }
    }

    pub fn inputs(&self) -> usize {
        self.channels + self.extra
    }

    fn gain(&self) -> core::ops::Range<usize> {
        0..self.channels
    }

    fn w(&self) -> core::ops::Range<usize> {
        let s = self.channels;
        s..s + self.hidden * self.inputs()
    }

    fn b(&self) -> core::ops::Range<usize> {
        let s = self.w().end;
        s..s + self.hidden
    }

    fn v(&self) -> core::ops::Range<usize> {
        let s = self.b().end;
        s..s + self.channels * self.hidden
    }

    fn bias(&self) -> core::ops::Range<usize> {
        let s = self.v().end;
        s..s + self.channels
    }

    pub fn param_len(&self) -> usize {
        self.bias().end
    }

    /// Named sub-segments with their shapes, in storage order.
    pub fn segments(&self) -> [(&'static str, Vec<usize>); 5] {
        [
            ("gain", vec![self.channels]),
            ("w", vec![self.hidden, self.inputs()]),
            ("b", vec![self.hidden]),
            ("v", vec![self.channels, self.hidden]),
            ("bias", vec![self.channels]),
        ]
    }

    pub fn scratch(&self) -> CrfScratch {
        CrfScratch {
            u: vec![0.0; self.inputs()],
            a: vec![0.0; self.hidden],
            out: vec![0.0; self.channels],
            g_a: vec![0.0; self.hidden],
        }
    }

    /// Identity-like start: unit gain, no hidden contribution, zero bias.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        let n_in = self.inputs();
        params[self.gain()].fill(1.0);
        for (i, w) in params[self.w()].iter_mut().enumerate() {
            *w = if i % n_in < self.channels {
                rng.gen_range(0.0..0.5)
            } else {
                rng.gen_range(-0.1..0.1)
            };
        }
        for b in &mut params[self.b()] {
            *b = rng.gen_range(-0.5..0.5);
        }
        params[self.v()].fill(0.0);
        params[self.bias()].fill(0.0);
    }

    /// Frozen identity: the output is exactly `u` (or `sigmoid(u)`).
    pub fn set_identity(&self, params: &mut [f64]) {
        params[..self.param_len()].fill(0.0);
        params[self.gain()].fill(1.0);
    }

    /// Clamp the constrained weights onto the non-negative orthant.
    pub fn project(&self, params: &mut [f64]) {
        let n_in = self.inputs();
        for g in &mut params[self.gain()] {
            *g = g.max(0.0);
        }
        for (i, w) in params[self.w()].iter_mut().enumerate() {
            if i % n_in < self.channels {
                *w = w.max(0.0);
            }
        }
        for v in &mut params[self.v()] {
            *v = v.max(0.0);
        }
    }

    pub fn forward<'a>(&self, params: &[f64], u: &[f64], s: &'a mut CrfScratch) -> &'a [f64] {
        let n_in = self.inputs();
        s.u.copy_from_slice(&u[..n_in]);
        let w = &params[self.w()];
        let b = &params[self.b()];
        for j in 0..self.hidden {
            let row = &w[j * n_in..(j + 1) * n_in];
            let mut acc = b[j];
            for i in 0..n_in {
                acc += row[i] * s.u[i];
            }
            s.a[j] = acc.tanh();
        }
        let gain = &params[self.gain()];
        let v = &params[self.v()];
        let bias = &params[self.bias()];
        for k in 0..self.channels {
            let row = &v[k * self.hidden..(k + 1) * self.hidden];
            let mut acc = gain[k] * s.u[k] + bias[k];
            for j in 0..self.hidden {
                acc += row[j] * s.a[j];
            }
            s.out[k] = if self.sigmoid_output { sigmoid(acc) } else { acc };
        }
        &s.out
    }

    /// Backward after [`CrfMapper::forward`]. Accumulates parameter
    /// gradients when `grad` is given and overwrites `g_u`.
    pub fn backward(
        &self,
        params: &[f64],
        s: &mut CrfScratch,
        g_out: &[f64],
        grad: Option<&mut [f64]>,
        g_u: &mut [f64],
    ) {
        let n_in = self.inputs();
        let h = self.hidden;
        let gain = &params[self.gain()];
        let v = &params[self.v()];
        let w = &params[self.w()];
        g_u[..n_in].fill(0.0);
        s.g_a.fill(0.0);
        let mut g_pre = [0.0f64; 3];
        for k in 0..self.channels {
            let g = if self.sigmoid_output {
                g_out[k] * sigmoid_grad(s.out[k])
            } else {
                g_out[k]
            };
            g_pre[k] = g;
            g_u[k] += gain[k] * g;
            for j in 0..h {
                s.g_a[j] += v[k * h + j] * g;
            }
        }
        for j in 0..h {
            s.g_a[j] *= tanh_grad(s.a[j]);
        }
        for j in 0..h {
            let gj = s.g_a[j];
            for i in 0..n_in {
                g_u[i] += w[j * n_in + i] * gj;
            }
        }
        if let Some(grad) = grad {
            for k in 0..self.channels {
                grad[self.gain().start + k] += g_pre[k] * s.u[k];
                grad[self.bias().start + k] += g_pre[k];
                let vo = self.v().start + k * h;
                for j in 0..h {
                    grad[vo + j] += g_pre[k] * s.a[j];
                }
            }
            let (wo, bo) = (self.w().start, self.b().start);
            for j in 0..h {
                let gj = s.g_a[j];
                grad[bo + j] += gj;
                for i in 0..n_in {
                    grad[wo + j * n_in + i] += gj * s.u[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trained_like(m: &CrfMapper, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p: Vec<f64> = (0..m.param_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        m.project(&mut p);
        p
    }

    #[test]
    fn identity_init_gives_half_at_zero() {
        let m = CrfMapper::new(3, 0, 16, true);
        let mut p = vec![0.0; m.param_len()];
        m.init(&mut p, &mut ChaCha8Rng::seed_from_u64(0));
        let mut s = m.scratch();
        assert_eq!(m.forward(&p, &[0.0; 3], &mut s), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn monotone_after_projection() {
        let m = CrfMapper::new(3, 2, 16, true);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..20 {
            let p = trained_like(&m, seed);
            let mut s = m.scratch();
            let u1 = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), 0.3, -0.2];
            let mut u2 = u1;
            for k in 0..3 {
                u2[k] += rng.gen_range(0.0..1.0);
            }
            let a = m.forward(&p, &u1, &mut s).to_vec();
            let b = m.forward(&p, &u2, &mut s).to_vec();
            for k in 0..3 {
                assert!(a[k] <= b[k]);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for &(c, extra, sig) in &[(3usize, 0usize, true), (1, 0, false), (3, 2, true)] {
            let m = CrfMapper::new(c, extra, 4, sig);
            let p = trained_like(&m, 7);
            let u: Vec<f64> = (0..m.inputs()).map(|i| 0.3 * i as f64 - 0.4).collect();
            let g_out = [0.5, -1.0, 0.25];
            let f = |p: &[f64], u: &[f64]| {
                let mut s = m.scratch();
                let o = m.forward(p, u, &mut s);
                (0..c).map(|k| o[k] * g_out[k]).sum::<f64>()
            };
            let mut s = m.scratch();
            m.forward(&p, &u, &mut s);
            let mut grad = vec![0.0; p.len()];
            let mut g_u = vec![0.0; u.len()];
            m.backward(&p, &mut s, &g_out[..c], Some(&mut grad), &mut g_u);
            let h = 1e-6;
            for i in 0..p.len() {
                let (mut a, mut b) = (p.clone(), p.clone());
                a[i] += h;
                b[i] -= h;
                let fd = (f(&a, &u) - f(&b, &u)) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-7 * fd.abs().max(1.0), "param {i}");
            }
            for i in 0..u.len() {
                let (mut a, mut b) = (u.clone(), u.clone());
                a[i] += h;
                b[i] -= h;
                let fd = (f(&p, &a) - f(&p, &b)) / (2.0 * h);
                assert!((fd - g_u[i]).abs() < 1e-7 * fd.abs().max(1.0), "input {i}");
            }
        }
    }
}
