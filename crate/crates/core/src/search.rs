//! Action selection over the tree: greedy Q-guided traversal and beam search.

use alloc::vec::Vec;

use crate::env::ActionVector;
use crate::model::best_branch;
use crate::tree::{ActionTree, NodeId};

/// Source of `(q, v)` for tree nodes under a fixed state.
pub trait NodeEvaluator {
    /// Writes the node's branch values into `branch` (length `m_max`) and
    /// returns its Q-value.
    fn evaluate(&mut self, tree: &ActionTree, node: NodeId, branch: &mut [f64]) -> f64;
}

impl<F> NodeEvaluator for F
where
    F: FnMut(&ActionTree, NodeId, &mut [f64]) -> f64,
{
    fn evaluate(&mut self, tree: &ActionTree, node: NodeId, branch: &mut [f64]) -> f64 {
        self(tree, node, branch)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraversalResult {
    pub chosen: ActionVector,
    pub node: NodeId,
    pub chosen_node_depth: usize,
    /// Number of nodes evaluated.
    pub visited: usize,
    pub q_of_chosen: f64,
}

/// Descends from the root, stopping where `q >= max` of the unmasked branch
/// values or at a leaf; otherwise moves to the best branch (lowest slot on
/// ties).
pub fn traverse_greedy<E: NodeEvaluator + ?Sized>(tree: &ActionTree, eval: &mut E) -> TraversalResult {
    let mut branch = alloc::vec![0.0; tree.m_max()];
    let mut node = tree.root();
    let mut visited = 0;
    loop {
        let q = eval.evaluate(tree, node, &mut branch);
        visited += 1;
        match best_branch(&branch, tree.child_mask(node)) {
            Some((slot, v)) if q < v => {
                node = tree.child(node, slot).expect("mask matches children");
            }
            _ => {
                return TraversalResult {
                    chosen: tree.node_action(node).clone(),
                    node,
                    chosen_node_depth: tree.depth(node),
                    visited,
                    q_of_chosen: q,
                }
            }
        }
    }
}

/// Level-synchronous beam search. At each level the children of the current
/// beam are ranked by the branch value of the edge leading to them and the
/// best `width` are kept, except that the first beam entry always continues
/// the greedy path, so every node greedy traversal would visit is visited.
/// Every visited node's `q` is recorded and the node with the highest `q`
/// wins (ties: shallowest, then smallest action).
pub fn beam_select<E: NodeEvaluator + ?Sized>(
    tree: &ActionTree,
    eval: &mut E,
    width: usize,
) -> TraversalResult {
    let width = width.max(1);
    let m = tree.m_max();
    let mut branch = alloc::vec![0.0; m];

    let root = tree.root();
    let q = eval.evaluate(tree, root, &mut branch);
    let mut visited = 1;
    let mut best = (root, q);
    // Beam entries carry their own branch values for expansion.
    let mut beam: Vec<(NodeId, Vec<f64>)> = alloc::vec![(root, branch.clone())];
    let mut candidates: Vec<(f64, usize, usize, NodeId)> = Vec::new();

    while !beam.is_empty() {
        candidates.clear();
        for (pos, (node, values)) in beam.iter().enumerate() {
            for &(slot, child) in tree.children(*node) {
                let slot = usize::from(slot);
                candidates.push((values[slot], pos, slot, child));
            }
        }
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        // Slot 0 follows the greedy path: the anchor's best child goes first.
        let (anchor, values) = &beam[0];
        if let Some((slot, _)) = best_branch(values, tree.child_mask(*anchor)) {
            let at = candidates
                .iter()
                .position(|c| c.1 == 0 && c.2 == slot)
                .expect("anchor child is a candidate");
            candidates[..=at].rotate_right(1);
        }
        candidates.truncate(width);
        let mut next = Vec::with_capacity(candidates.len());
        for &(_, _, _, child) in &candidates {
            let q = eval.evaluate(tree, child, &mut branch);
            visited += 1;
            if better(tree, (child, q), best) {
                best = (child, q);
            }
            next.push((child, branch.clone()));
        }
        beam = next;
    }

    TraversalResult {
        chosen: tree.node_action(best.0).clone(),
        node: best.0,
        chosen_node_depth: tree.depth(best.0),
        visited,
        q_of_chosen: best.1,
    }
}

fn better(tree: &ActionTree, cand: (NodeId, f64), best: (NodeId, f64)) -> bool {
    if cand.1 != best.1 {
        return cand.1 > best.1;
    }
    let (dc, db) = (tree.depth(cand.0), tree.depth(best.0));
    if dc != db {
        return dc < db;
    }
    tree.node_action(cand.0) < tree.node_action(best.0)
}
