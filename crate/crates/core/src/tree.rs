//! Prefix tree over joint actions.
//!
//! Every node carries a complete action vector: the sub-actions fixed on the
//! path from the root, with the remaining dimensions at their default (0).
//! A node at depth `k` has fixed dimensions `0..k`; its children set
//! dimension `k`. Branch slot `j` of a node is the child whose value is `j`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::env::ActionVector;
use crate::error::{Error, Result};

/// Largest tree `build_full` will enumerate.
pub const MAX_FULL_LEAVES: u128 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Node {
    action: ActionVector,
    depth: usize,
    parent: Option<NodeId>,
    /// Children in ascending sub-action value.
    children: Vec<(u8, NodeId)>,
    mask: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionTree {
    nodes: Vec<Node>,
    cardinalities: Vec<usize>,
    m_max: usize,
    sparsified: bool,
    leaves: usize,
}

impl ActionTree {
    /// Complete tree over the product of the given sub-action sets.
    pub fn build_full(cardinalities: &[usize]) -> Result<Self> {
        check_cardinalities(cardinalities)?;
        let leaves = cardinalities
            .iter()
            .try_fold(1u128, |acc, &c| acc.checked_mul(c as u128))
            .unwrap_or(u128::MAX);
        if leaves > MAX_FULL_LEAVES {
            return Err(Error::Tree(format!(
                "full tree would have {leaves} leaves (limit {MAX_FULL_LEAVES})"
            )));
        }
        let n = cardinalities.len();
        let mut actions = BTreeSet::new();
        let mut cur = alloc::vec![0u8; n];
        loop {
            actions.insert(ActionVector(cur.clone()));
            let mut i = n;
            loop {
                if i == 0 {
                    let mut tree = Self::from_sorted(cardinalities, actions.iter());
                    tree.sparsified = false;
                    return Ok(tree);
                }
                i -= 1;
                cur[i] += 1;
                if usize::from(cur[i]) < cardinalities[i] {
                    break;
                }
                cur[i] = 0;
            }
        }
    }

    /// Prefix tree containing exactly the given actions as depth-N paths.
    /// The result does not depend on the order of `actions`.
    pub fn build_sparsified<'a, I>(cardinalities: &[usize], actions: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ActionVector>,
    {
        check_cardinalities(cardinalities)?;
        let set: BTreeSet<&ActionVector> = actions.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Tree("empty action set".into()));
        }
        for a in &set {
            if a.len() != cardinalities.len() {
                return Err(Error::Dimension {
                    expected: cardinalities.len(),
                    actual: a.len(),
                });
            }
            if a.0.iter().zip(cardinalities).any(|(&v, &c)| usize::from(v) >= c) {
                return Err(Error::Tree(format!("action {:?} outside sub-action sets", a.0)));
            }
        }
        Ok(Self::from_sorted(cardinalities, set.into_iter()))
    }

    fn from_sorted<'a>(cardinalities: &[usize], actions: impl Iterator<Item = &'a ActionVector>) -> Self {
        let n = cardinalities.len();
        let m_max = cardinalities.iter().copied().max().unwrap_or(1);
        let mut tree = ActionTree {
            nodes: alloc::vec![Node {
                action: ActionVector::defaults(n),
                depth: 0,
                parent: None,
                children: Vec::new(),
                mask: alloc::vec![false; m_max],
            }],
            cardinalities: cardinalities.to_vec(),
            m_max,
            sparsified: true,
            leaves: 0,
        };
        for a in actions {
            let mut cur = NodeId::ROOT;
            for k in 0..n {
                let v = a.0[k];
                cur = match tree.child(cur, usize::from(v)) {
                    Some(c) => c,
                    None => tree.push_child(cur, v),
                };
            }
        }
        tree.leaves = tree.nodes.iter().filter(|nd| nd.depth == n).count();
        tree
    }

    fn push_child(&mut self, parent: NodeId, value: u8) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let p = &self.nodes[parent.index()];
        let mut action = p.action.clone();
        action.0[p.depth] = value;
        let depth = p.depth + 1;
        self.nodes.push(Node {
            action,
            depth,
            parent: Some(parent),
            children: Vec::new(),
            mask: alloc::vec![false; self.m_max],
        });
        let p = &mut self.nodes[parent.index()];
        let pos = p.children.partition_point(|&(v, _)| v < value);
        p.children.insert(pos, (value, id));
        p.mask[usize::from(value)] = true;
        id
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    /// Number of sub-action dimensions.
    pub fn action_dims(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    /// Width of the branch-value vector, `max_d |A_d|`.
    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn is_sparsified(&self) -> bool {
        self.sparsified
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn node_action(&self, node: NodeId) -> &ActionVector {
        &self.nodes[node.index()].action
    }

    pub fn depth(&self, node: NodeId) -> usize {
        self.nodes[node.index()].depth
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        self.nodes[node.index()].children.is_empty()
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.nodes[node.index()].parent
    }

    /// Children as `(sub-action value, node)` in ascending value.
    pub fn children(&self, node: NodeId) -> &[(u8, NodeId)] {
        &self.nodes[node.index()].children
    }

    /// The child in branch slot `slot`, if present.
    pub fn child(&self, node: NodeId, slot: usize) -> Option<NodeId> {
        let ch = &self.nodes[node.index()].children;
        ch.binary_search_by_key(&slot, |&(v, _)| usize::from(v))
            .ok()
            .map(|i| ch[i].1)
    }

    /// `mask[j]` is true iff branch slot `j` has a child.
    pub fn child_mask(&self, node: NodeId) -> &[bool] {
        &self.nodes[node.index()].mask
    }

    /// Branch slot of `node` within its parent's children.
    pub fn slot_in_parent(&self, node: NodeId) -> Option<usize> {
        let nd = &self.nodes[node.index()];
        nd.parent.map(|_| usize::from(nd.action.0[nd.depth - 1]))
    }

    /// The leaf whose root path spells `action`.
    pub fn locate(&self, action: &ActionVector) -> Result<NodeId> {
        if action.len() != self.action_dims() {
            return Err(Error::Lookup(action.0.clone()));
        }
        let mut cur = NodeId::ROOT;
        for &v in &action.0 {
            cur = self
                .child(cur, usize::from(v))
                .ok_or_else(|| Error::Lookup(action.0.clone()))?;
        }
        Ok(cur)
    }

    /// Actions spelled by all depth-N paths, in ascending order.
    pub fn leaf_actions(&self) -> Vec<ActionVector> {
        let n = self.action_dims();
        let mut out: Vec<_> = self
            .nodes
            .iter()
            .filter(|nd| nd.depth == n)
            .map(|nd| nd.action.clone())
            .collect();
        out.sort();
        out
    }
}

fn check_cardinalities(c: &[usize]) -> Result<()> {
    if c.is_empty() {
        return Err(Error::Tree("no sub-action dimensions".into()));
    }
    if c.iter().any(|&x| x == 0 || x > 256) {
        return Err(Error::Tree("sub-action cardinalities must lie in 1..=256".into()));
    }
    Ok(())
}
