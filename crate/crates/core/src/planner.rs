//! A* over the joint-action transition graph of an environment.
//!
//! Every action moves each axis by -1, 0 or +1 (after clamping), so the
//! successors of a state are exactly the in-bounds states within Chebyshev
//! distance one. Pits are impassable and each step costs one. The Chebyshev
//! distance to the goal is an admissible heuristic.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::env::{ActionVector, EnvConfig, GridState};
use crate::error::{Error, Result};

/// Caches exact goal distances across queries on one environment.
pub struct Planner<'a> {
    cfg: &'a EnvConfig,
    dist: BTreeMap<GridState, Option<u32>>,
}

fn chebyshev(a: &GridState, b: &GridState) -> u32 {
    a.0.iter()
        .zip(&b.0)
        .map(|(&x, &y)| u32::from(x.abs_diff(y)))
        .max()
        .unwrap_or(0)
}

/// Calls `f` with every neighbour of `state` (excluding `state` itself), in
/// lexicographic order of the smallest action reaching it: per axis the
/// primitive pairs (0,0) < (0,1) < (1,0), i.e. deltas 0, -1, +1.
pub(crate) fn for_each_neighbour(
    state: &GridState,
    size: u16,
    mut f: impl FnMut(&GridState, &ActionVector) -> bool,
) {
    const DELTAS: [(i32, [u8; 2]); 3] = [(0, [0, 0]), (-1, [0, 1]), (1, [1, 0])];
    let dims = state.dims();
    let mut digits = alloc::vec![0usize; dims];
    let mut next = state.clone();
    let mut action = ActionVector::defaults(2 * dims);
    'outer: loop {
        let mut ok = true;
        let mut moved = false;
        for axis in 0..dims {
            let (d, pair) = DELTAS[digits[axis]];
            let c = i32::from(state.0[axis]) + d;
            if c < 0 || c >= i32::from(size) {
                ok = false;
                break;
            }
            moved |= d != 0;
            next.0[axis] = c as u16;
            action.0[2 * axis] = pair[0];
            action.0[2 * axis + 1] = pair[1];
        }
        if ok && moved && !f(&next, &action) {
            return;
        }
        // Odometer increment, last axis fastest.
        let mut axis = dims;
        loop {
            if axis == 0 {
                break 'outer;
            }
            axis -= 1;
            digits[axis] += 1;
            if digits[axis] < DELTAS.len() {
                break;
            }
            digits[axis] = 0;
        }
    }
}

impl<'a> Planner<'a> {
    pub fn new(cfg: &'a EnvConfig) -> Self {
        Planner {
            cfg,
            dist: BTreeMap::new(),
        }
    }

    /// Minimum number of steps from `state` to the goal, avoiding pits.
    pub fn distance(&mut self, state: &GridState) -> Option<u32> {
        if let Some(&d) = self.dist.get(state) {
            return d;
        }
        let (d, path) = self.astar(state);
        if let Some(d) = d {
            for (i, s) in path.into_iter().enumerate() {
                self.dist.insert(s, Some(d - i as u32));
            }
        }
        self.dist.insert(state.clone(), d);
        d
    }

    fn astar(&self, from: &GridState) -> (Option<u32>, Vec<GridState>) {
        let goal = &self.cfg.goal;
        if from == goal {
            return (Some(0), Vec::new());
        }
        let mut best: BTreeMap<GridState, (u32, Option<GridState>)> = BTreeMap::new();
        let mut open = BinaryHeap::new();
        best.insert(from.clone(), (0, None));
        open.push(Reverse((chebyshev(from, goal), 0u32, from.clone())));
        while let Some(Reverse((_, g, s))) = open.pop() {
            if best.get(&s).is_some_and(|&(bg, _)| bg < g) {
                continue;
            }
            if s == *goal {
                let mut path = Vec::new();
                let mut cur = Some(s);
                while let Some(c) = cur {
                    cur = best[&c].1.clone();
                    path.push(c);
                }
                path.reverse();
                return (Some(g), path);
            }
            let mut succ = Vec::new();
            for_each_neighbour(&s, self.cfg.size, |n, _| {
                if !self.cfg.is_pit(n) {
                    succ.push(n.clone());
                }
                true
            });
            for n in succ {
                let ng = g + 1;
                if best.get(&n).is_none_or(|&(bg, _)| ng < bg) {
                    best.insert(n.clone(), (ng, Some(s.clone())));
                    open.push(Reverse((ng + chebyshev(&n, goal), ng, n)));
                }
            }
        }
        (None, Vec::new())
    }

    /// The lexicographically smallest action on a shortest path to the goal.
    pub fn optimal_action(&mut self, state: &GridState) -> Result<ActionVector> {
        let d = self
            .distance(state)
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Planning(state.0.clone()))?;
        let goal = self.cfg.goal.clone();
        let mut candidates = Vec::new();
        for_each_neighbour(state, self.cfg.size, |n, a| {
            if !self.cfg.is_pit(n) && chebyshev(n, &goal) < d {
                candidates.push((n.clone(), a.clone()));
            }
            true
        });
        // Candidates arrive in lexicographic action order.
        for (n, a) in candidates {
            if self.distance(&n) == Some(d - 1) {
                return Ok(a);
            }
        }
        Err(Error::Planning(state.0.clone()))
    }
}
