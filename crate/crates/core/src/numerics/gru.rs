//! Gated recurrent units with explicit backpropagation through time.
//!
//! Gate blocks inside the stacked `3H` weights are ordered `(z, r, n)`:
//!
//! ```text
//! z  = σ(W_iz x + b_iz + W_hz h + b_hz)
//! r  = σ(W_ir x + b_ir + W_hr h + b_hr)
//! n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```
//!
//! The initial state of every layer is zero.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::activation::{sigmoid_scalar, tanh_scalar};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// A sequence of equal-length vectors, time-major.
pub type Sequence = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    /// `3H × in`
    pub input_weights: Matrix,
    /// `3H × H`
    pub hidden_weights: Matrix,
    /// `3H × 1`
    pub input_bias: Matrix,
    /// `3H × 1`
    pub hidden_bias: Matrix,
}

impl GruCell {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_weights: Matrix::zeros(3 * hidden, input_dim),
            hidden_weights: Matrix::zeros(3 * hidden, hidden),
            input_bias: Matrix::zeros(3 * hidden, 1),
            hidden_bias: Matrix::zeros(3 * hidden, 1),
        }
    }

    #[inline]
    pub fn hidden_size(&self) -> usize {
        self.hidden_weights.cols()
    }

    #[inline]
    pub fn input_size(&self) -> usize {
        self.input_weights.cols()
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(format!("{prefix}.w_ih"), &self.input_weights);
        f(format!("{prefix}.w_hh"), &self.hidden_weights);
        f(format!("{prefix}.b_ih"), &self.input_bias);
        f(format!("{prefix}.b_hh"), &self.hidden_bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        f(format!("{prefix}.w_ih"), &mut self.input_weights);
        f(format!("{prefix}.w_hh"), &mut self.hidden_weights);
        f(format!("{prefix}.b_ih"), &mut self.input_bias);
        f(format!("{prefix}.b_hh"), &mut self.hidden_bias);
    }

    /// One recurrence step. Returns the new state and, when `keep` is set,
    /// the activations needed for the backward pass.
    fn step(&self, x: &[f64], h: &[f64], scratch: &mut [f64], keep: bool) -> (Vec<f64>, Option<StepCache>) {
        let hs = self.hidden_size();
        let (gi, gh) = scratch.split_at_mut(3 * hs);
        self.input_weights.matvec_into(x, gi);
        self.hidden_weights.matvec_into(h, gh);
        let bi = self.input_bias.as_slice();
        let bh = self.hidden_bias.as_slice();

        let mut out = vec![0.0; hs];
        let (mut z, mut r, mut n, mut hn) = if keep {
            (vec![0.0; hs], vec![0.0; hs], vec![0.0; hs], vec![0.0; hs])
        } else {
            (Vec::new(), Vec::new(), Vec::new(), Vec::new())
        };
        for j in 0..hs {
            let zj = sigmoid_scalar(gi[j] + bi[j] + gh[j] + bh[j]);
            let rj = sigmoid_scalar(gi[hs + j] + bi[hs + j] + gh[hs + j] + bh[hs + j]);
            let hnj = gh[2 * hs + j] + bh[2 * hs + j];
            let nj = tanh_scalar(gi[2 * hs + j] + bi[2 * hs + j] + rj * hnj);
            out[j] = (1.0 - zj) * nj + zj * h[j];
            if keep {
                z[j] = zj;
                r[j] = rj;
                n[j] = nj;
                hn[j] = hnj;
            }
        }
        let cache = keep.then(|| StepCache {
            input: x.to_vec(),
            h_prev: h.to_vec(),
            z,
            r,
            n,
            hn,
        });
        (out, cache)
    }

    fn run(&self, inputs: &[Vec<f64>], keep: bool) -> (Sequence, Vec<StepCache>) {
        let hs = self.hidden_size();
        let mut h = vec![0.0; hs];
        let mut scratch = vec![0.0; 6 * hs];
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut caches = Vec::with_capacity(if keep { inputs.len() } else { 0 });
        for x in inputs {
            let (next, cache) = self.step(x, &h, &mut scratch, keep);
            if let Some(c) = cache {
                caches.push(c);
            }
            outputs.push(next.clone());
            h = next;
        }
        (outputs, caches)
    }

    /// Backpropagates through a full sequence run of this cell.
    fn backprop(&self, caches: &[StepCache], grad_outputs: &[Vec<f64>], grads: &mut GruCell) -> Sequence {
        let hs = self.hidden_size();
        let mut dh_next = vec![0.0; hs];
        let mut grad_inputs = vec![vec![0.0; self.input_size()]; caches.len()];
        let mut gi = vec![0.0; 3 * hs];
        let mut gh = vec![0.0; 3 * hs];
        for t in (0..caches.len()).rev() {
            let c = &caches[t];
            let mut dh_prev = vec![0.0; hs];
            for j in 0..hs {
                let dh = grad_outputs[t][j] + dh_next[j];
                let (z, r, n) = (c.z[j], c.r[j], c.n[j]);
                let dn_pre = dh * (1.0 - z) * (1.0 - n * n);
                let dz_pre = dh * (c.h_prev[j] - n) * z * (1.0 - z);
                let dr_pre = dn_pre * c.hn[j] * r * (1.0 - r);
                gi[j] = dz_pre;
                gi[hs + j] = dr_pre;
                gi[2 * hs + j] = dn_pre;
                gh[j] = dz_pre;
                gh[hs + j] = dr_pre;
                gh[2 * hs + j] = dn_pre * r;
                dh_prev[j] = dh * z;
            }
            grads.input_weights.add_outer(&gi, &c.input);
            grads.input_bias.add_column(&gi);
            grads.hidden_weights.add_outer(&gh, &c.h_prev);
            grads.hidden_bias.add_column(&gh);
            self.input_weights.matvec_t_acc(&gi, &mut grad_inputs[t]);
            self.hidden_weights.matvec_t_acc(&gh, &mut dh_prev);
            dh_next = dh_prev;
        }
        grad_inputs
    }
}

/// Activations retained from one recurrence step.
#[derive(Debug, Clone)]
pub struct StepCache {
    input: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    /// `W_hn h + b_hn`, the hidden contribution gated by `r`.
    hn: Vec<f64>,
}

/// One layer, optionally bidirectional. A bidirectional layer emits the
/// concatenation `[forward; backward]` at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    pub forward: GruCell,
    pub backward: Option<GruCell>,
}

impl GruLayer {
    fn output_dim(&self) -> usize {
        self.forward.hidden_size() * if self.backward.is_some() { 2 } else { 1 }
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    forward: Vec<StepCache>,
    backward: Option<Vec<StepCache>>,
}

/// Per-layer, per-step activations kept for [`GruStack::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    len: usize,
}

impl ForwardCache {
    /// Number of time steps the cache covers.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Stack of GRU layers applied in sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStack {
    pub layers: Vec<GruLayer>,
}

impl GruStack {
    /// All-zero stack. Layer 0 consumes `input_dim`, later layers consume the
    /// previous layer's output.
    pub fn zeros(input_dim: usize, hidden: usize, layers: usize, bidirectional: bool) -> Self {
        let dirs = if bidirectional { 2 } else { 1 };
        let layers = (0..layers)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { hidden * dirs };
                GruLayer {
                    forward: GruCell::zeros(in_dim, hidden),
                    backward: bidirectional.then(|| GruCell::zeros(in_dim, hidden)),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.forward.input_size())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, GruLayer::output_dim)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| GruLayer {
                    forward: GruCell::zeros(l.forward.input_size(), l.forward.hidden_size()),
                    backward: l
                        .backward
                        .as_ref()
                        .map(|b| GruCell::zeros(b.input_size(), b.hidden_size())),
                })
                .collect(),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.forward.visit(&format!("{prefix}.{i}.fwd"), f);
            if let Some(b) = &l.backward {
                b.visit(&format!("{prefix}.{i}.bwd"), f);
            }
        }
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.forward.visit_mut(&format!("{prefix}.{i}.fwd"), f);
            if let Some(b) = &mut l.backward {
                b.visit_mut(&format!("{prefix}.{i}.bwd"), f);
            }
        }
    }

    fn check_inputs(&self, inputs: &[Vec<f64>]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::Shape {
                op: "gru_forward",
                left: (self.input_dim(), 1),
                right: (0, 0),
            });
        }
        if let Some(bad) = inputs.iter().find(|x| x.len() != self.input_dim()) {
            return Err(Error::Shape {
                op: "gru_forward",
                left: (self.input_dim(), 1),
                right: (bad.len(), 1),
            });
        }
        Ok(())
    }

    /// Runs the stack and keeps a cache for the backward pass.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<(Sequence, ForwardCache)> {
        self.check_inputs(inputs)?;
        let (out, layers) = self.run(inputs, true);
        Ok((
            out,
            ForwardCache {
                layers,
                len: inputs.len(),
            },
        ))
    }

    /// Runs the stack without retaining activations.
    pub fn infer(&self, inputs: &[Vec<f64>]) -> Result<Sequence> {
        self.check_inputs(inputs)?;
        Ok(self.run(inputs, false).0)
    }

    fn run(&self, inputs: &[Vec<f64>], keep: bool) -> (Sequence, Vec<LayerCache>) {
        let mut seq: Sequence = inputs.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (fwd_out, fwd_cache) = layer.forward.run(&seq, keep);
            let (next, bwd_cache) = match &layer.backward {
                None => (fwd_out, None),
                Some(cell) => {
                    let reversed: Sequence = seq.iter().rev().cloned().collect();
                    let (bwd_out, bwd_cache) = cell.run(&reversed, keep);
                    let merged = fwd_out
                        .into_iter()
                        .zip(bwd_out.into_iter().rev())
                        .map(|(mut f, b)| {
                            f.extend_from_slice(&b);
                            f
                        })
                        .collect();
                    (merged, Some(bwd_cache))
                }
            };
            if keep {
                caches.push(LayerCache {
                    forward: fwd_cache,
                    backward: bwd_cache,
                });
            }
            seq = next;
        }
        (seq, caches)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the inputs.
    pub fn backward(&self, cache: &ForwardCache, grad_outputs: &[Vec<f64>], grads: &mut GruStack) -> Result<Sequence> {
        if grad_outputs.len() != cache.len || cache.layers.len() != self.layers.len() {
            return Err(Error::Shape {
                op: "gru_backward",
                left: (cache.len, cache.layers.len()),
                right: (grad_outputs.len(), self.layers.len()),
            });
        }
        if let Some(bad) = grad_outputs.iter().find(|g| g.len() != self.output_dim()) {
            return Err(Error::Shape {
                op: "gru_backward",
                left: (self.output_dim(), 1),
                right: (bad.len(), 1),
            });
        }
        let mut upstream: Sequence = grad_outputs.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[l];
            let g = &mut grads.layers[l];
            upstream = match (&layer.backward, &lc.backward, &mut g.backward) {
                (Some(bcell), Some(bcache), Some(bgrad)) => {
                    let hs = layer.forward.hidden_size();
                    let gf: Sequence = upstream.iter().map(|v| v[..hs].to_vec()).collect();
                    let gb_rev: Sequence = upstream.iter().rev().map(|v| v[hs..].to_vec()).collect();
                    let mut dx = layer.forward.backprop(&lc.forward, &gf, &mut g.forward);
                    let dx_rev = bcell.backprop(bcache, &gb_rev, bgrad);
                    for (d, b) in dx.iter_mut().zip(dx_rev.iter().rev()) {
                        for (a, v) in d.iter_mut().zip(b) {
                            *a += v;
                        }
                    }
                    dx
                }
                _ => layer.forward.backprop(&lc.forward, &upstream, &mut g.forward),
            };
        }
        Ok(upstream)
    }
}

/// Runs `params` over `inputs`. See [`GruStack::forward`].
pub fn gru_forward(params: &GruStack, inputs: &[Vec<f64>]) -> Result<(Sequence, ForwardCache)> {
    params.forward(inputs)
}

/// Returns `(param_grads, grad_inputs)` for upstream gradients on the outputs.
pub fn gru_backward(params: &GruStack, cache: &ForwardCache, grad_outputs: &[Vec<f64>]) -> Result<(GruStack, Sequence)> {
    let mut grads = params.zeros_like();
    let gx = params.backward(cache, grad_outputs, &mut grads)?;
    Ok((grads, gx))
}
