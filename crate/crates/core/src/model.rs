//! Feed-forward value model with hand-written backpropagation.
//!
//! The network maps an encoded `(state, node)` input to `1 + m_max` outputs:
//! the node Q-value followed by the branch values. The input is the state
//! scaled to `[0, 1]`, the raw action vector, and one flag per sub-action
//! dimension marking whether the node has assigned it. Without the flags a
//! node and its default-valued child would be indistinguishable.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ActionVector, GridState};
use crate::error::{Error, Result};
use crate::tree::{ActionTree, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub m_max: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(state_dim: usize, action_dim: usize, m_max: usize) -> Self {
        ModelConfig {
            state_dim,
            action_dim,
            hidden_sizes: alloc::vec![256, 256],
            m_max,
            learning_rate: 3e-4,
            seed: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + 2 * self.action_dim
    }

    pub fn output_dim(&self) -> usize {
        1 + self.m_max
    }

    fn layer_sizes(&self) -> Vec<usize> {
        let mut s = alloc::vec![self.input_dim()];
        s.extend_from_slice(&self.hidden_sizes);
        s.push(self.output_dim());
        s
    }
}

/// Output of one network evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub q: f64,
    pub v: Vec<f64>,
    /// `mask[j]` is false for branch slots without a child; those entries of
    /// `v` are reported but must not be used.
    pub mask: Vec<bool>,
}

impl ModelOutput {
    /// Largest unmasked branch value with its slot (lowest slot on ties).
    pub fn best_branch(&self) -> Option<(usize, f64)> {
        best_branch(&self.v, &self.mask)
    }
}

pub(crate) fn best_branch(v: &[f64], mask: &[bool]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, (&x, &m)) in v.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|(_, b)| x > b) {
            best = Some((j, x));
        }
    }
    best
}

/// Flat parameter vector plus layer shapes `(out, in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub values: Vec<f64>,
    pub shapes: Vec<(usize, usize)>,
}

impl ParameterSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Dense tanh network. Weights of each layer are stored row-major `(out, in)`
/// followed by the biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Per-evaluation activations, reusable across calls.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        Mlp { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.sizes.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(|&(o, i)| o * i + o).sum()
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init(&self, seed: u64) -> ParameterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = self.shapes();
        let mut values = Vec::with_capacity(self.param_count());
        for &(o, i) in &shapes {
            let bound = libm::sqrt(6.0 / (o + i) as f64);
            values.extend((0..o * i).map(|_| rng.random_range(-bound..bound)));
            values.extend(core::iter::repeat_n(0.0, o));
        }
        ParameterSet { values, shapes }
    }

    pub fn scratch(&self) -> Scratch {
        let widest = *self.sizes.iter().max().unwrap();
        Scratch {
            acts: self.sizes.iter().map(|&s| alloc::vec![0.0; s]).collect(),
            delta: alloc::vec![0.0; widest],
            delta_prev: alloc::vec![0.0; widest],
        }
    }

    pub fn forward<'s>(&self, params: &[f64], input: &[f64], scratch: &'s mut Scratch) -> &'s [f64] {
        assert_eq!(input.len(), self.input_dim());
        scratch.acts[0].copy_from_slice(input);
        let layers = self.sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, rest) = params[off..].split_at(n_in * n_out);
            let b = &rest[..n_out];
            off += n_in * n_out + n_out;
            let (prev, next) = scratch.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let y = &mut next[0];
            for (o, out) in y.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + dot(row, x);
                *out = if l + 1 < layers { libm::tanh(z) } else { z };
            }
        }
        &scratch.acts[layers]
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`
    /// for the activations stored by the last `forward` on `scratch`.
    pub fn backward(&self, params: &[f64], scratch: &mut Scratch, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut end = params.len();
        let Scratch { acts, delta, delta_prev } = scratch;
        delta[..d_out.len()].copy_from_slice(d_out);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = end - (n_in * n_out + n_out);
            end = off;
            let x = &acts[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, &xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l > 0 {
                let w = &params[off..off + n_in * n_out];
                let dp = &mut delta_prev[..n_in];
                dp.fill(0.0);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (acc, &wi) in dp.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *acc += d * wi;
                    }
                }
                for (acc, &a) in dp.iter_mut().zip(x.iter()) {
                    *acc *= 1.0 - a * a;
                }
                core::mem::swap(delta, delta_prev);
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Adam optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(t));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(t));
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / (libm::sqrt(*v / c2) + self.eps);
        }
    }
}

/// State coordinates scaled to `[0, 1]`.
pub fn normalize_state(state: &GridState, size: u16) -> Vec<f64> {
    let scale = f64::from(size.saturating_sub(1).max(1));
    state.0.iter().map(|&c| f64::from(c) / scale).collect()
}

/// Network input for `action` with the first `assigned` dimensions fixed.
pub fn encode_input(state: &[f64], action: &ActionVector, assigned: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(state);
    out.extend(action.0.iter().map(|&a| f64::from(a)));
    out.extend((0..action.len()).map(|d| if d < assigned { 1.0 } else { 0.0 }));
}

/// Online network, target copy and optimizer.
#[derive(Clone, Debug)]
pub struct ValueModel {
    pub config: ModelConfig,
    pub net: Mlp,
    pub params: ParameterSet,
    pub target: ParameterSet,
    adam: Adam,
}

impl ValueModel {
    pub fn new(config: ModelConfig) -> Self {
        let net = Mlp::new(config.layer_sizes());
        let params = net.init(config.seed);
        Self::from_parameters(config, params.values).expect("fresh parameters match")
    }

    /// Rebuilds a model from stored parameters; the target is set to a copy.
    pub fn from_parameters(config: ModelConfig, values: Vec<f64>) -> Result<Self> {
        let net = Mlp::new(config.layer_sizes());
        if values.len() != net.param_count() {
            return Err(Error::Dimension {
                expected: net.param_count(),
                actual: values.len(),
            });
        }
        let params = ParameterSet {
            values,
            shapes: net.shapes(),
        };
        Ok(ValueModel {
            adam: Adam::new(params.len()),
            target: params.clone(),
            params,
            net,
            config,
        })
    }

    /// Single raw network evaluation.
    pub fn forward(
        &self,
        params: &ParameterSet,
        state: &[f64],
        action: &ActionVector,
        assigned: usize,
        mask: &[bool],
    ) -> Result<ModelOutput> {
        if state.len() != self.config.state_dim {
            return Err(Error::Dimension {
                expected: self.config.state_dim,
                actual: state.len(),
            });
        }
        if action.len() != self.config.action_dim {
            return Err(Error::Dimension {
                expected: self.config.action_dim,
                actual: action.len(),
            });
        }
        if mask.len() != self.config.m_max {
            return Err(Error::Dimension {
                expected: self.config.m_max,
                actual: mask.len(),
            });
        }
        let mut input = Vec::new();
        encode_input(state, action, assigned, &mut input);
        let mut scratch = self.net.scratch();
        let out = self.net.forward(&params.values, &input, &mut scratch);
        Ok(ModelOutput {
            q: out[0],
            v: out[1..].to_vec(),
            mask: mask.to_vec(),
        })
    }

    /// Node outputs under `params`: `q` is the value of the node's complete
    /// action, `v` the branch values of the node's children.
    pub fn evaluate_node(
        &self,
        params: &ParameterSet,
        state: &[f64],
        tree: &ActionTree,
        node: NodeId,
    ) -> ModelOutput {
        let mut ev = NetEvaluator::new(self, params, state);
        let mut v = alloc::vec![0.0; self.config.m_max];
        let q = crate::search::NodeEvaluator::evaluate(&mut ev, tree, node, &mut v);
        ModelOutput {
            q,
            v,
            mask: tree.child_mask(node).to_vec(),
        }
    }

    /// Hard copy of the online parameters into the target.
    pub fn sync_target(&mut self) -> &ParameterSet {
        self.target.values.copy_from_slice(&self.params.values);
        &self.target
    }

    /// One optimizer step on an explicit gradient (already averaged).
    /// Returns the gradient norm.
    pub fn apply_gradient(&mut self, grad: &[f64], step: usize) -> Result<f64> {
        let norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
        if !norm.is_finite() {
            return Err(Error::Training { step, what: "gradient" });
        }
        let lr = self.config.learning_rate;
        self.adam.step(&mut self.params.values, grad, lr);
        Ok(norm)
    }

    /// Backpropagates each `(input, d loss / d output)` pair, averages over
    /// the batch and takes one optimizer step.
    pub fn backward_and_step(&mut self, batch: &[(Vec<f64>, Vec<f64>)], step: usize) -> Result<f64> {
        let mut grad = alloc::vec![0.0; self.params.len()];
        let mut scratch = self.net.scratch();
        for (input, d_out) in batch {
            if input.len() != self.net.input_dim() || d_out.len() != self.net.output_dim() {
                return Err(Error::Dimension {
                    expected: self.net.output_dim(),
                    actual: d_out.len(),
                });
            }
            if d_out.iter().any(|d| !d.is_finite()) {
                return Err(Error::Training { step, what: "gradient" });
            }
            self.net.forward(&self.params.values, input, &mut scratch);
            self.net.backward(&self.params.values, &mut scratch, d_out, &mut grad);
        }
        if !batch.is_empty() {
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
        }
        self.apply_gradient(&grad, step)
    }
}

/// Evaluates tree nodes with a parameter set for one fixed state.
///
/// A node's `q` comes from the fully-assigned encoding of its action, so it
/// only depends on the complete action; its branch values come from the
/// encoding at the node's depth.
pub struct NetEvaluator<'a> {
    model: &'a ValueModel,
    params: &'a [f64],
    state: &'a [f64],
    scratch: Scratch,
    input: Vec<f64>,
    pub evaluations: usize,
}

impl<'a> NetEvaluator<'a> {
    pub fn new(model: &'a ValueModel, params: &'a ParameterSet, state: &'a [f64]) -> Self {
        NetEvaluator {
            scratch: model.net.scratch(),
            input: Vec::with_capacity(model.net.input_dim()),
            model,
            params: &params.values,
            state,
            evaluations: 0,
        }
    }

    /// Raw outputs for `action` with `assigned` dimensions fixed.
    pub fn raw(&mut self, action: &ActionVector, assigned: usize) -> &[f64] {
        encode_input(self.state, action, assigned, &mut self.input);
        self.evaluations += 1;
        self.model.net.forward(self.params, &self.input, &mut self.scratch)
    }
}

impl crate::search::NodeEvaluator for NetEvaluator<'_> {
    fn evaluate(&mut self, tree: &ActionTree, node: NodeId, branch: &mut [f64]) -> f64 {
        let action = tree.node_action(node);
        let n = tree.action_dims();
        let depth = tree.depth(node);
        let out = self.raw(action, depth);
        branch.copy_from_slice(&out[1..]);
        if depth == n {
            out[0]
        } else {
            self.raw(action, n)[0]
        }
    }
}
