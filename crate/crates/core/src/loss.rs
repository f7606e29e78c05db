//! Behaviour-regularized TD target and the branch-value propagation loss.
//!
//! For a sampled transition the target `Y` is computed once, at the leaf of
//! the sampled action, and then walked up to the root. At every ancestor the
//! branch value pointing back down is regressed onto the current `Y`, with a
//! weight that grows linearly with the distance travelled (`delta * d`). The
//! target is then replaced by the best of the ancestor's own Q-value, its
//! other branch values and the old target. The sum is divided by the final
//! `d`. The leaf term is the TD loss and is weighted by `alpha`; the ancestor
//! terms form the branch loss.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Transition;
use crate::env::ActionVector;
use crate::error::{Error, Result};
use crate::model::{encode_input, normalize_state, NetEvaluator, Scratch, ValueModel};
use crate::search::{traverse_greedy, TraversalResult};
use crate::tree::ActionTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyNorm {
    L1,
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BraveConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub delta: f64,
    pub gamma: f64,
    pub beam_width: usize,
    pub penalty_norm: PenaltyNorm,
}

impl Default for BraveConfig {
    fn default() -> Self {
        BraveConfig {
            alpha: 1.0,
            lambda: 1.0,
            delta: 1.0,
            gamma: 0.9,
            beam_width: 10,
            penalty_norm: PenaltyNorm::L1,
        }
    }
}

impl BraveConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.lambda >= 0.0
            && self.delta >= 0.0
            && (0.0..=1.0).contains(&self.gamma)
            && self.beam_width >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("BraVE hyperparameters out of range".into()))
        }
    }
}

/// How gradients treat the propagated targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetGradient {
    /// Targets are constants (semi-gradient).
    #[default]
    Detached,
    /// Gradients also flow into whichever online output each propagated
    /// target was taken from.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LossBreakdown {
    pub td_component: f64,
    pub brave_component: f64,
    /// `alpha * td_component + brave_component`.
    pub total: f64,
    /// Final value of the level counter `d`.
    pub levels: usize,
}

pub fn behavior_penalty(a_hat: &ActionVector, a_next: &ActionVector, norm: PenaltyNorm) -> f64 {
    let diffs = a_hat
        .0
        .iter()
        .zip(&a_next.0)
        .map(|(&x, &y)| f64::from(x) - f64::from(y));
    match norm {
        PenaltyNorm::L1 => diffs.map(f64::abs).sum(),
        PenaltyNorm::L2 => libm::sqrt(diffs.map(|d| d * d).sum()),
    }
}

/// `lambda * (r + gamma * q_next) - ||a_hat - a_next||`, with the bootstrap
/// and the penalty dropped on terminal transitions.
pub fn td_target(
    reward: f64,
    q_next: f64,
    a_hat: &ActionVector,
    a_next: &ActionVector,
    terminal: bool,
    cfg: &BraveConfig,
) -> f64 {
    if terminal {
        cfg.lambda * reward
    } else {
        cfg.lambda * (reward + cfg.gamma * q_next) - behavior_penalty(a_hat, a_next, cfg.penalty_norm)
    }
}

/// Online outputs of one ancestor on the upward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PathLevel {
    pub q: f64,
    pub v: Vec<f64>,
    pub mask: Vec<bool>,
    /// Branch slot of the child we came from.
    pub slot: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct LevelGradient {
    pub d_q: f64,
    pub d_v: Vec<f64>,
}

/// Gradient of the total loss with respect to every output on the path.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PathGradient {
    pub d_leaf_q: f64,
    pub levels: Vec<LevelGradient>,
}

#[derive(Clone, Copy)]
enum Source {
    Constant,
    Q(usize),
    V(usize, usize),
}

/// Runs the upward pass over `levels` (ordered from the leaf's parent to the
/// root) and returns the loss and its gradient with respect to the outputs.
pub fn propagate(
    leaf_q: f64,
    levels: &[PathLevel],
    target: f64,
    alpha: f64,
    delta: f64,
    mode: TargetGradient,
) -> (LossBreakdown, PathGradient) {
    let mut grad = PathGradient {
        d_leaf_q: 0.0,
        levels: levels
            .iter()
            .map(|l| LevelGradient {
                d_q: 0.0,
                d_v: alloc::vec![0.0; l.v.len()],
            })
            .collect(),
    };
    let td = (leaf_q - target) * (leaf_q - target);
    let mut y = target;
    let mut src = Source::Constant;
    let mut branch = 0.0;
    let mut d = 1usize;
    for (li, level) in levels.iter().enumerate() {
        let w = delta * d as f64;
        let diff = (level.v[level.slot] - y) * w;
        branch += diff * diff;
        let g = 2.0 * diff * w;
        grad.levels[li].d_v[level.slot] += g;
        if mode == TargetGradient::Full {
            match src {
                Source::Constant => {}
                Source::Q(l) => grad.levels[l].d_q -= g,
                Source::V(l, j) => grad.levels[l].d_v[j] -= g,
            }
        }
        let (mut best, mut best_src) = (level.q, Source::Q(li));
        for (j, (&vj, &m)) in level.v.iter().zip(&level.mask).enumerate() {
            if !m {
                continue;
            }
            let (val, s) = if j == level.slot { (y, src) } else { (vj, Source::V(li, j)) };
            if val > best {
                best = val;
                best_src = s;
            }
        }
        y = best;
        src = best_src;
        d += 1;
    }
    let scale = 1.0 / d as f64;
    grad.d_leaf_q = alpha * 2.0 * (leaf_q - target) * scale;
    for l in &mut grad.levels {
        l.d_q *= scale;
        l.d_v.iter_mut().for_each(|x| *x *= scale);
    }
    let td_component = td * scale;
    let brave_component = branch * scale;
    (
        LossBreakdown {
            td_component,
            brave_component,
            total: alpha * td_component + brave_component,
            levels: d,
        },
        grad,
    )
}

/// Target for a transition: traverses the tree at `s'` with the target
/// parameters to pick `a_hat`, then applies [`td_target`].
pub fn transition_target(
    model: &ValueModel,
    tree: &ActionTree,
    t: &Transition,
    size: u16,
    cfg: &BraveConfig,
) -> (f64, Option<TraversalResult>) {
    if t.terminal {
        return (td_target(t.reward, 0.0, &t.next_action, &t.next_action, true, cfg), None);
    }
    let feats = normalize_state(&t.next_state, size);
    let mut ev = NetEvaluator::new(model, &model.target, &feats);
    let r = traverse_greedy(tree, &mut ev);
    let y = td_target(t.reward, r.q_of_chosen, &r.chosen, &t.next_action, false, cfg);
    (y, Some(r))
}

/// Reusable buffers for [`loss_and_gradient`].
#[derive(Default)]
pub struct LossWorkspace {
    pool: Vec<Scratch>,
    outputs: Vec<Vec<f64>>,
    d_out: Vec<Vec<f64>>,
    input: Vec<f64>,
    q_actions: Vec<(ActionVector, usize)>,
}

struct Evals<'a> {
    model: &'a ValueModel,
    state: &'a [f64],
    ws: &'a mut LossWorkspace,
    used: usize,
}

impl Evals<'_> {
    fn run(&mut self, action: &ActionVector, assigned: usize) -> usize {
        let idx = self.used;
        self.used += 1;
        let ws = &mut *self.ws;
        if ws.pool.len() <= idx {
            ws.pool.push(self.model.net.scratch());
            ws.outputs.push(Vec::new());
            ws.d_out.push(Vec::new());
        }
        encode_input(self.state, action, assigned, &mut ws.input);
        let out = self.model.net.forward(&self.model.params.values, &ws.input, &mut ws.pool[idx]);
        ws.outputs[idx].clear();
        ws.outputs[idx].extend_from_slice(out);
        ws.d_out[idx].clear();
        ws.d_out[idx].resize(out.len(), 0.0);
        idx
    }

    /// Q evaluation of a complete action, shared between nodes with equal actions.
    fn q_eval(&mut self, action: &ActionVector, n: usize) -> usize {
        if let Some(&(_, idx)) = self.ws.q_actions.iter().find(|(a, _)| a == action) {
            return idx;
        }
        let idx = self.run(action, n);
        self.ws.q_actions.push((action.clone(), idx));
        idx
    }
}

/// Loss of one transition under the online parameters (target parameters
/// for the bootstrap), accumulating `d loss / d params` into `grad` when given.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_gradient(
    model: &ValueModel,
    tree: &ActionTree,
    t: &Transition,
    size: u16,
    cfg: &BraveConfig,
    mode: TargetGradient,
    ws: &mut LossWorkspace,
    grad: Option<&mut [f64]>,
) -> Result<LossBreakdown> {
    let leaf = tree.locate(&t.action)?;
    let (target, _) = transition_target(model, tree, t, size, cfg);
    let n = tree.action_dims();
    let feats = normalize_state(&t.state, size);
    ws.q_actions.clear();
    let mut ev = Evals {
        model,
        state: &feats,
        ws,
        used: 0,
    };

    let leaf_eval = ev.q_eval(&t.action, n);
    // (q eval index, v eval index, slot) for each ancestor.
    let mut refs = Vec::with_capacity(n);
    let mut node = leaf;
    while let Some(parent) = tree.parent(node) {
        let slot = tree.slot_in_parent(node).expect("non-root has a slot");
        let action = tree.node_action(parent);
        let vi = ev.run(action, tree.depth(parent));
        let qi = ev.q_eval(action, n);
        refs.push((qi, vi, slot, parent));
        node = parent;
    }
    let used = ev.used;
    let ws = ev.ws;

    let leaf_q = ws.outputs[leaf_eval][0];
    let levels: Vec<PathLevel> = refs
        .iter()
        .map(|&(qi, vi, slot, parent)| PathLevel {
            q: ws.outputs[qi][0],
            v: ws.outputs[vi][1..].to_vec(),
            mask: tree.child_mask(parent).to_vec(),
            slot,
        })
        .collect();
    let (loss, pg) = propagate(leaf_q, &levels, target, cfg.alpha, cfg.delta, mode);

    if let Some(grad) = grad {
        ws.d_out[leaf_eval][0] += pg.d_leaf_q;
        for (&(qi, vi, _, _), lg) in refs.iter().zip(&pg.levels) {
            ws.d_out[qi][0] += lg.d_q;
            for (d, &g) in ws.d_out[vi][1..].iter_mut().zip(&lg.d_v) {
                *d += g;
            }
        }
        for i in 0..used {
            if ws.d_out[i].iter().any(|&g| g != 0.0) {
                model.net.backward(&model.params.values, &mut ws.pool[i], &ws.d_out[i], grad);
            }
        }
    }
    Ok(loss)
}

/// Loss of one transition (no gradient).
pub fn brave_loss(
    model: &ValueModel,
    tree: &ActionTree,
    t: &Transition,
    size: u16,
    cfg: &BraveConfig,
) -> Result<LossBreakdown> {
    let mut ws = LossWorkspace::default();
    loss_and_gradient(model, tree, t, size, cfg, TargetGradient::Detached, &mut ws, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn av(v: &[u8]) -> ActionVector {
        ActionVector(v.to_vec())
    }

    #[test]
    fn td_target_examples() {
        let cfg = BraveConfig {
            lambda: 1.0,
            gamma: 0.0,
            ..Default::default()
        };
        assert_eq!(td_target(2.0, 5.0, &av(&[1, 0]), &av(&[1, 0]), false, &cfg), 2.0);
        let cfg = BraveConfig {
            lambda: 1.0,
            gamma: 0.9,
            ..Default::default()
        };
        let y = td_target(1.0, 10.0, &av(&[1, 0]), &av(&[0, 0]), false, &cfg);
        assert!((y - 9.0).abs() < 1e-12);
        let half = BraveConfig { lambda: 0.5, ..cfg.clone() };
        let y2 = td_target(1.0, 10.0, &av(&[1, 0]), &av(&[0, 0]), false, &half);
        assert!((y2 - (0.5 * 10.0 - 1.0)).abs() < 1e-12);
        // Terminal: no bootstrap, no penalty.
        assert_eq!(td_target(3.0, 10.0, &av(&[1, 1]), &av(&[0, 0]), true, &cfg), 3.0);
    }

    #[test]
    fn l2_penalty() {
        assert!((behavior_penalty(&av(&[1, 1, 0]), &av(&[0, 0, 0]), PenaltyNorm::L2) - libm::sqrt(2.0)).abs() < 1e-12);
        assert_eq!(behavior_penalty(&av(&[1, 1, 0]), &av(&[0, 0, 1]), PenaltyNorm::L1), 3.0);
    }

    #[test]
    fn single_dimension_closed_form() {
        // N = 1: leaf term plus one root term, divided by 2.
        let (q_leaf, y, v_i, q_root, delta, alpha) = (1.5, 4.0, 2.5, -1.0, 0.5, 2.0);
        let levels = vec![PathLevel {
            q: q_root,
            v: vec![7.0, v_i],
            mask: vec![true, true],
            slot: 1,
        }];
        let (loss, _) = propagate(q_leaf, &levels, y, alpha, delta, TargetGradient::Detached);
        let td = (q_leaf - y) * (q_leaf - y) / 2.0;
        let br = ((v_i - y) * delta * 1.0) * ((v_i - y) * delta * 1.0) / 2.0;
        assert!((loss.td_component - td).abs() < 1e-12);
        assert!((loss.brave_component - br).abs() < 1e-12);
        assert!((loss.total - (alpha * td + br)).abs() < 1e-12);
        assert_eq!(loss.levels, 2);
    }

    #[test]
    fn zero_delta_leaves_only_td() {
        let levels = vec![
            PathLevel { q: 1.0, v: vec![3.0, 8.0], mask: vec![true, true], slot: 0 },
            PathLevel { q: 2.0, v: vec![-3.0, 5.0], mask: vec![true, true], slot: 1 },
        ];
        let (loss, g) = propagate(1.0, &levels, 2.0, 1.0, 0.0, TargetGradient::Full);
        assert_eq!(loss.brave_component, 0.0);
        assert!((loss.total - 1.0 / 3.0).abs() < 1e-12);
        assert!(g.levels.iter().all(|l| l.d_q == 0.0 && l.d_v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn target_follows_max_of_parent_siblings_and_propagated() {
        // Four ancestors of [1,1,1,0]; track the target each level sees by
        // reading back the gradient sign pattern through a unit weight.
        let levels = vec![
            PathLevel { q: 0.0, v: vec![2.0, 6.0], mask: vec![true, false], slot: 0 },
            PathLevel { q: 9.0, v: vec![-1.0, 1.0], mask: vec![true, true], slot: 1 },
            PathLevel { q: 0.0, v: vec![12.0, 3.0], mask: vec![true, true], slot: 1 },
            PathLevel { q: 0.0, v: vec![0.0, 0.0], mask: vec![true, true], slot: 1 },
        ];
        // With delta*d weights the per-level residuals are v[slot] - Y_level.
        let y0 = 5.0;
        let expected_targets = [5.0, 5.0, 9.0, 12.0];
        let (loss, _) = propagate(0.0, &levels, y0, 0.0, 1.0, TargetGradient::Detached);
        let mut manual = 0.0;
        for (i, (l, y)) in levels.iter().zip(expected_targets).enumerate() {
            let r = (l.v[l.slot] - y) * (i + 1) as f64;
            manual += r * r;
        }
        assert!((loss.brave_component - manual / 5.0).abs() < 1e-12);
    }

    #[test]
    fn masked_values_do_not_affect_loss_or_gradient() {
        let mk = |masked: f64| {
            vec![PathLevel { q: 0.5, v: vec![1.0, masked, 2.0], mask: vec![true, false, true], slot: 0 }]
        };
        let (l1, g1) = propagate(0.0, &mk(-50.0), 1.0, 1.0, 1.0, TargetGradient::Full);
        let (l2, g2) = propagate(0.0, &mk(50.0), 1.0, 1.0, 1.0, TargetGradient::Full);
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
        assert_eq!(g1.levels[0].d_v[1], 0.0);
    }
}
