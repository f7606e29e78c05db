//! Exact value iteration on the deterministic grid MDP.
//!
//! Rewards depend only on the arrival state, so the Bellman backup only
//! needs the distinct successor states rather than all `4^D` actions. The
//! episode horizon is ignored.

use alloc::vec::Vec;

use crate::env::{ActionVector, EnvConfig, GridState, TerminalKind};
use crate::error::{Error, Result};
use crate::planner::for_each_neighbour;

/// Largest `|S| * |A|` the oracle accepts.
pub const MAX_PAIRS: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViConfig {
    pub gamma: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for ViConfig {
    fn default() -> Self {
        ViConfig {
            gamma: 1.0,
            tolerance: 1e-10,
            max_sweeps: 100_000,
        }
    }
}

/// Per-state `max_a Q*(s, a)` and a greedy action. Terminal states hold 0
/// and the default action.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub dims: usize,
    pub size: u16,
    pub values: Vec<f64>,
    pub actions: Vec<ActionVector>,
    pub sweeps: usize,
    /// Sup-norm change of the last sweep.
    pub residual: f64,
}

impl ValueTable {
    pub fn index(&self, state: &GridState) -> usize {
        index_of(state, self.size)
    }

    pub fn state(&self, index: usize) -> GridState {
        state_of(index, self.dims, self.size)
    }

    pub fn max_q(&self, state: &GridState) -> f64 {
        self.values[self.index(state)]
    }

    pub fn greedy_action(&self, state: &GridState) -> &ActionVector {
        &self.actions[self.index(state)]
    }
}

fn index_of(state: &GridState, size: u16) -> usize {
    state
        .0
        .iter()
        .rev()
        .fold(0usize, |acc, &c| acc * usize::from(size) + usize::from(c))
}

fn state_of(mut idx: usize, dims: usize, size: u16) -> GridState {
    let m = usize::from(size);
    GridState(
        (0..dims)
            .map(|_| {
                let c = idx % m;
                idx /= m;
                c as u16
            })
            .collect(),
    )
}

/// Successor of `s`: reward, successor index (None if absorbing) and action.
type Edge = (f64, Option<usize>, ActionVector);

pub fn value_iteration(cfg: &EnvConfig, vc: &ViConfig) -> Result<ValueTable> {
    cfg.validate()?;
    let n_states = u128::from(cfg.size).pow(cfg.dims as u32);
    let pairs = n_states.saturating_mul(4u128.saturating_pow(cfg.dims as u32));
    if pairs > MAX_PAIRS {
        return Err(Error::TooLarge(pairs));
    }
    let n = n_states as usize;

    let terminal = |s: &GridState| *s == cfg.goal || cfg.is_pit(s);
    let edge = |next: &GridState, action: &ActionVector| -> Edge {
        let (r, kind) = cfg.transition_reward(next);
        let succ = (kind == TerminalKind::None).then(|| index_of(next, cfg.size));
        (r, succ, action.clone())
    };
    let mut edges: Vec<Vec<Edge>> = Vec::with_capacity(n);
    for i in 0..n {
        let s = state_of(i, cfg.dims, cfg.size);
        let mut out = Vec::new();
        if !terminal(&s) {
            // Staying put; the all-default action is lexicographically first.
            out.push(edge(&s, &ActionVector::defaults(cfg.action_dims())));
            for_each_neighbour(&s, cfg.size, |next, a| {
                out.push(edge(next, a));
                true
            });
        }
        edges.push(out);
    }

    let backup = |values: &[f64], es: &[Edge]| -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (k, (r, succ, _)) in es.iter().enumerate() {
            let q = r + succ.map_or(0.0, |j| vc.gamma * values[j]);
            if q > best.0 {
                best = (q, k);
            }
        }
        best
    };

    let mut values = alloc::vec![0.0; n];
    let mut next = alloc::vec![0.0; n];
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while residual >= vc.tolerance {
        if sweeps == vc.max_sweeps {
            return Err(Error::Config("value iteration did not converge".into()));
        }
        residual = 0.0;
        for (i, es) in edges.iter().enumerate() {
            next[i] = if es.is_empty() { 0.0 } else { backup(&values, es).0 };
            residual = f64::max(residual, libm::fabs(next[i] - values[i]));
        }
        core::mem::swap(&mut values, &mut next);
        sweeps += 1;
    }

    let actions = edges
        .iter()
        .map(|es| {
            if es.is_empty() {
                ActionVector::defaults(cfg.action_dims())
            } else {
                es[backup(&values, es).1].2.clone()
            }
        })
        .collect();
    Ok(ValueTable {
        dims: cfg.dims,
        size: cfg.size,
        values,
        actions,
        sweeps,
        residual,
    })
}
