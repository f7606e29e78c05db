//! DQN baseline restricted to the actions observed in the dataset.
//!
//! The network maps a state to one value per allowed action. Targets use the
//! same behavior-regularized form as the tree model, with `a_hat` the argmax
//! of the target network over the allowed set.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::env::{ActionVector, GridState};
use crate::error::{Error, Result};
use crate::loss::{td_target, BraveConfig};
use crate::model::{normalize_state, Adam, Mlp, ParameterSet};
use crate::train::{check_schedule, LossMeter, TrainConfig, TrainLog};

#[derive(Clone, Debug)]
pub struct ConstrainedDqn {
    pub actions: Vec<ActionVector>,
    pub net: Mlp,
    pub params: ParameterSet,
    pub target: ParameterSet,
    pub learning_rate: f64,
    adam: Adam,
}

impl ConstrainedDqn {
    pub fn new(
        state_dim: usize,
        actions: &BTreeSet<ActionVector>,
        hidden_sizes: &[usize],
        learning_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Config("empty action set".into()));
        }
        let mut sizes = alloc::vec![state_dim];
        sizes.extend_from_slice(hidden_sizes);
        sizes.push(actions.len());
        let net = Mlp::new(sizes);
        let params = net.init(seed);
        Ok(ConstrainedDqn {
            actions: actions.iter().cloned().collect(),
            adam: Adam::new(params.len()),
            target: params.clone(),
            params,
            net,
            learning_rate,
        })
    }

    fn action_index(&self, a: &ActionVector) -> Result<usize> {
        self.actions
            .binary_search(a)
            .map_err(|_| Error::Lookup(a.0.clone()))
    }

    /// Q-values of every allowed action at `state` (normalized features).
    pub fn q_values(&self, params: &ParameterSet, feats: &[f64]) -> Vec<f64> {
        let mut scratch = self.net.scratch();
        self.net.forward(&params.values, feats, &mut scratch).to_vec()
    }

    /// Greedy allowed action; lowest index on ties.
    pub fn greedy(&self, params: &ParameterSet, feats: &[f64]) -> (usize, f64) {
        argmax(&self.q_values(params, feats))
    }

    pub fn policy(&self, size: u16) -> impl FnMut(&GridState) -> ActionVector + '_ {
        move |s: &GridState| {
            let feats = normalize_state(s, size);
            self.actions[self.greedy(&self.params, &feats).0].clone()
        }
    }
}

fn argmax(xs: &[f64]) -> (usize, f64) {
    let mut best = (0, xs[0]);
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Trains `dqn` on squared TD error with the same schedule and log format
/// as the tree model. `brave_loss` is logged as zero.
pub fn train_dqn<H>(
    dataset: &Dataset,
    dqn: &mut ConstrainedDqn,
    cfg: &BraveConfig,
    tc: &TrainConfig,
    mut eval_hook: H,
) -> Result<TrainLog>
where
    H: FnMut(usize, &ConstrainedDqn) -> Result<(f64, f64)>,
{
    cfg.validate()?;
    check_schedule(tc)?;
    let env = &dataset.env;
    if dqn.net.input_dim() != env.dims {
        return Err(Error::Dimension {
            expected: env.dims,
            actual: dqn.net.input_dim(),
        });
    }
    let mut log = TrainLog::default();
    if tc.steps == 0 {
        return Ok(log);
    }
    if dataset.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    // Resolve indices once; unknown actions are an error up front.
    let idx: Vec<usize> = dataset
        .transitions
        .iter()
        .map(|t| dqn.action_index(&t.action))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut grad = alloc::vec![0.0; dqn.params.len()];
    let mut d_out = alloc::vec![0.0; dqn.actions.len()];
    let mut scratch = dqn.net.scratch();
    let mut meter = LossMeter::default();
    let inv = 1.0 / tc.batch_size as f64;

    for step in 1..=tc.steps {
        grad.fill(0.0);
        let mut total = 0.0;
        for _ in 0..tc.batch_size {
            let k = rng.random_range(0..dataset.len());
            let t = &dataset.transitions[k];
            let y = if t.terminal {
                td_target(t.reward, 0.0, &t.next_action, &t.next_action, true, cfg)
            } else {
                let (j, q_next) = dqn.greedy(&dqn.target, &normalize_state(&t.next_state, env.size));
                td_target(t.reward, q_next, &dqn.actions[j], &t.next_action, false, cfg)
            };
            let feats = normalize_state(&t.state, env.size);
            let q = dqn.net.forward(&dqn.params.values, &feats, &mut scratch)[idx[k]];
            let err = q - y;
            total += err * err;
            d_out.fill(0.0);
            d_out[idx[k]] = 2.0 * err;
            dqn.net.backward(&dqn.params.values, &mut scratch, &d_out, &mut grad);
        }
        if !total.is_finite() {
            return Err(Error::Training { step, what: "loss" });
        }
        grad.iter_mut().for_each(|g| *g *= inv);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training { step, what: "gradient" });
        }
        dqn.adam.step(&mut dqn.params.values, &grad, dqn.learning_rate);
        meter.add(total * inv, total * inv, 0.0);
        if step % tc.target_sync_interval == 0 {
            dqn.target.values.copy_from_slice(&dqn.params.values);
        }
        if step % tc.eval_interval == 0 {
            let eval = eval_hook(step, dqn)?;
            log.rows.push(meter.row(step, eval));
        }
    }
    Ok(log)
}
