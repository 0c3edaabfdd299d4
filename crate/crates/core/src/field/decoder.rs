//! Small fully connected network with ReLU or softplus hidden activations.

use alloc::vec;
use alloc::vec::Vec;

use crate::diff::{affine, affine_backward, sigmoid, softplus};

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Smooth everywhere, at several times the cost.
    Softplus,
}

/// Layer widths `[input, hidden.., output]`; the output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    // offsets of (weights, bias) per layer, relative to the network start
    offsets: Vec<(usize, usize)>,
    len: usize,
}

/// Per-query activations kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpScratch {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

impl Mlp {
    pub fn new(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2);
        let mut offsets = Vec::new();
        let mut off = 0;
        for w in sizes.windows(2) {
            let wo = off;
            off += w[0] * w[1];
            offsets.push((wo, off));
            off += w[1];
        }
        Self {
            sizes: sizes.to_vec(),
            activation,
            offsets,
            len: off,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> usize {
        self.offsets.len()
    }

    pub fn param_len(&self) -> usize {
        self.len
    }

    /// `(rows, cols)` of the weight matrix of layer `l`.
    pub fn weight_shape(&self, l: usize) -> (usize, usize) {
        (self.sizes[l + 1], self.sizes[l])
    }

    pub fn weight_range(&self, l: usize) -> core::ops::Range<usize> {
        let (r, c) = self.weight_shape(l);
        self.offsets[l].0..self.offsets[l].0 + r * c
    }

    pub fn bias_range(&self, l: usize) -> core::ops::Range<usize> {
        self.offsets[l].1..self.offsets[l].1 + self.sizes[l + 1]
    }

    pub fn scratch(&self) -> MlpScratch {
        let width = *self.sizes.iter().max().unwrap();
        MlpScratch {
            acts: self.sizes.iter().map(|&n| vec![0.0; n]).collect(),
            pre: self.sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
            grad_a: vec![0.0; width],
            grad_b: vec![0.0; width],
        }
    }

    /// Forward pass; the output is `scratch.output()`.
    pub fn forward(&self, params: &[f64], input: &[f64], s: &mut MlpScratch) {
        s.acts[0].copy_from_slice(input);
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let w = &params[self.weight_range(l)];
            let b = &params[self.bias_range(l)];
            let (head, tail) = s.acts.split_at_mut(l + 1);
            affine(w, b, &head[l], &mut s.pre[l]);
            let out = &mut tail[0];
            if l == last {
                out.copy_from_slice(&s.pre[l]);
            } else {
                match self.activation {
                    Activation::Relu => {
                        for (o, &p) in out.iter_mut().zip(&s.pre[l]) {
                            *o = p.max(0.0);
                        }
                    }
                    Activation::Softplus => {
                        for (o, &p) in out.iter_mut().zip(&s.pre[l]) {
                            *o = softplus(p);
                        }
                    }
                }
            }
        }
    }

    pub fn output<'a>(&self, s: &'a MlpScratch) -> &'a [f64] {
        &s.acts[self.layers()]
    }

    /// Backward pass for output gradient `g_out`, after [`Mlp::forward`].
    /// Parameter gradients, when requested, accumulate into `grad` (same
    /// relative layout); the input gradient is written to `g_input`.
    pub fn backward(
        &self,
        params: &[f64],
        s: &mut MlpScratch,
        g_out: &[f64],
        mut grad: Option<&mut [f64]>,
        g_input: Option<&mut [f64]>,
    ) {
        let last = self.layers() - 1;
        let n_out = self.sizes[last + 1];
        s.grad_a[..n_out].copy_from_slice(g_out);
        for l in (0..self.layers()).rev() {
            let (n_in, n_o) = (self.sizes[l], self.sizes[l + 1]);
            if l != last {
                match self.activation {
                    Activation::Relu => {
                        for k in 0..n_o {
                            if s.pre[l][k] <= 0.0 {
                                s.grad_a[k] = 0.0;
                            }
                        }
                    }
                    // d/dp softplus(p) = sigmoid(p)
                    Activation::Softplus => {
                        for k in 0..n_o {
                            s.grad_a[k] *= sigmoid(s.pre[l][k]);
                        }
                    }
                }
            }
            let (wr, br) = (self.weight_range(l), self.bias_range(l));
            let grads = grad.as_deref_mut().map(|g| {
                let (a, b) = g.split_at_mut(br.start);
                (&mut a[wr.clone()], &mut b[..n_o])
            });
            let need_input = l > 0 || g_input.is_some();
            affine_backward(
                &params[wr],
                &s.acts[l],
                &s.grad_a[..n_o],
                grads,
                if need_input { Some(&mut s.grad_b[..n_in]) } else { None },
            );
            core::mem::swap(&mut s.grad_a, &mut s.grad_b);
        }
        if let Some(gi) = g_input {
            gi.copy_from_slice(&s.grad_a[..self.sizes[0]]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{finite_difference_check, Workload};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_sizes() {
        let m = Mlp::new(&[12, 32, 32, 20], Activation::Relu);
        assert_eq!(m.param_len(), 12 * 32 + 32 + 32 * 32 + 32 + 32 * 20 + 20);
        assert_eq!(m.bias_range(2).end, m.param_len());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for act in [Activation::Relu, Activation::Softplus] {
            check_gradients(act);
        }
    }

    fn check_gradients(act: Activation) {
        let m = Mlp::new(&[3, 5, 4, 2], act);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let input = [0.3, -0.7, 1.1];
        let g_out = [0.4, -1.2];
        let n = m.param_len();
        let mut params: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        params.extend_from_slice(&input);
        let w = |p: &[f64], grad: Option<&mut [f64]>| -> crate::Result<f64> {
            let mut s = m.scratch();
            m.forward(&p[..n], &p[n..], &mut s);
            let out = m.output(&s);
            let f = out[0] * g_out[0] + out[1] * g_out[1];
            if let Some(g) = grad {
                g.fill(0.0);
                let (gp, gi) = g.split_at_mut(n);
                m.backward(&p[..n], &mut s, &g_out, Some(gp), Some(gi));
            }
            Ok(f)
        };
        let mut layout = crate::diff::Layout::new();
        layout.push("mlp", &[n]);
        layout.push("input", &[3]);
        let pv = crate::diff::ParamVector::from_values(alloc::sync::Arc::new(layout), params);
        let k = pv.len();
        let report = finite_difference_check(&pv, &w as &dyn Workload, 1e-6, k, &mut rng).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
