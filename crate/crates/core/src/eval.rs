//! Policy rollouts from the environment start.

use alloc::vec::Vec;

use crate::env::{ActionVector, EnvConfig, GridState, TerminalKind};
use crate::error::Result;
use crate::model::{normalize_state, NetEvaluator, ValueModel};
use crate::search::beam_select;
use crate::tree::ActionTree;

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    /// Undiscounted return.
    pub ret: f64,
    pub steps: u32,
    pub kind: TerminalKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEval {
    pub mean: f64,
    /// Population standard deviation over episodes.
    pub std: f64,
    pub goal_rate: f64,
    pub pit_rate: f64,
    pub horizon_rate: f64,
    pub returns: Vec<f64>,
}

pub fn rollout<P>(cfg: &EnvConfig, policy: &mut P) -> Result<EpisodeOutcome>
where
    P: FnMut(&GridState) -> ActionVector + ?Sized,
{
    let mut state = cfg.reset();
    let mut ret = 0.0;
    let mut steps = 0;
    loop {
        let action = policy(&state);
        let out = cfg.step(&state, &action, steps)?;
        ret += out.reward;
        steps += 1;
        if out.terminal {
            return Ok(EpisodeOutcome {
                ret,
                steps,
                kind: out.terminal_kind,
            });
        }
        state = out.next_state;
    }
}

pub fn evaluate_policy<P>(cfg: &EnvConfig, policy: &mut P, episodes: usize) -> Result<PolicyEval>
where
    P: FnMut(&GridState) -> ActionVector + ?Sized,
{
    let mut returns = Vec::with_capacity(episodes);
    let (mut goal, mut pit, mut horizon) = (0usize, 0usize, 0usize);
    for _ in 0..episodes {
        let ep = rollout(cfg, policy)?;
        match ep.kind {
            TerminalKind::Goal => goal += 1,
            TerminalKind::Pit => pit += 1,
            TerminalKind::Horizon => horizon += 1,
            TerminalKind::None => {}
        }
        returns.push(ep.ret);
    }
    let n = episodes.max(1) as f64;
    let (mean, std) = mean_std(&returns);
    Ok(PolicyEval {
        mean,
        std,
        goal_rate: goal as f64 / n,
        pit_rate: pit as f64 / n,
        horizon_rate: horizon as f64 / n,
        returns,
    })
}

/// Mean and population standard deviation; `(0, 0)` for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Beam-search policy over the online parameters of `model`.
pub fn beam_policy<'a>(
    model: &'a ValueModel,
    tree: &'a ActionTree,
    size: u16,
    width: usize,
) -> impl FnMut(&GridState) -> ActionVector + 'a {
    move |s: &GridState| {
        let feats = normalize_state(s, size);
        let mut ev = NetEvaluator::new(model, &model.params, &feats);
        beam_select(tree, &mut ev, width).chosen
    }
}
