//! Offline datasets gathered by a stochastic A* behaviour policy.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ActionVector, EnvConfig, GridState};
use crate::error::{Error, Result};
use crate::planner::Planner;

/// One SARSA record.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: GridState,
    pub action: ActionVector,
    pub reward: f64,
    pub next_state: GridState,
    /// The action taken at `next_state`; all defaults when `terminal`.
    pub next_action: ActionVector,
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub transitions: Vec<Transition>,
    /// Half-open index ranges into `transitions`, one per episode.
    pub episodes: Vec<Range<usize>>,
    pub env: EnvConfig,
}

/// Primitive pairs allowed on an axis at coordinate `c`: the unclamped
/// displacement must stay inside the grid.
fn valid_pairs(c: u16, size: u16) -> &'static [[u8; 2]] {
    const ALL: [[u8; 2]; 4] = [[0, 0], [0, 1], [1, 0], [1, 1]];
    const AT_LOW: [[u8; 2]; 3] = [[0, 0], [1, 0], [1, 1]];
    const AT_HIGH: [[u8; 2]; 3] = [[0, 0], [0, 1], [1, 1]];
    const STUCK: [[u8; 2]; 2] = [[0, 0], [1, 1]];
    match (c == 0, c + 1 == size) {
        (true, true) => &STUCK,
        (true, false) => &AT_LOW,
        (false, true) => &AT_HIGH,
        (false, false) => &ALL,
    }
}

/// An action is valid when its unclamped displacement stays in bounds.
/// Actions that enter pits are valid.
pub fn is_valid_action(cfg: &EnvConfig, state: &GridState, action: &ActionVector) -> bool {
    action.len() == cfg.action_dims()
        && action.0.iter().all(|&v| v <= 1)
        && state.0.iter().enumerate().all(|(axis, &c)| {
            let pair = [action.0[2 * axis], action.0[2 * axis + 1]];
            valid_pairs(c, cfg.size).contains(&pair)
        })
}

pub fn valid_action_count(cfg: &EnvConfig, state: &GridState) -> usize {
    state
        .0
        .iter()
        .map(|&c| valid_pairs(c, cfg.size).len())
        .product()
}

/// Uniform sample from the valid actions at `state`.
pub fn sample_valid_action<R: Rng + ?Sized>(cfg: &EnvConfig, state: &GridState, rng: &mut R) -> ActionVector {
    let mut out = Vec::with_capacity(cfg.action_dims());
    for &c in &state.0 {
        let pairs = valid_pairs(c, cfg.size);
        out.extend_from_slice(&pairs[rng.random_range(0..pairs.len())]);
    }
    ActionVector(out)
}

/// Random stream for episode `episode` under a master seed. Episodes are
/// independent, so they may be generated in any order or in parallel.
pub fn episode_rng(master_seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(episode as u64);
    rng
}

/// Rolls out one episode of the stochastic A* behaviour policy.
pub fn generate_episode(
    cfg: &EnvConfig,
    planner: &mut Planner<'_>,
    p_opt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Transition>> {
    let mut state = cfg.reset();
    let mut steps = 0u32;
    let mut records: Vec<Transition> = Vec::new();
    loop {
        let action = if rng.random::<f64>() < p_opt {
            planner.optimal_action(&state)?
        } else {
            sample_valid_action(cfg, &state, rng)
        };
        if let Some(prev) = records.last_mut() {
            prev.next_action = action.clone();
        }
        let out = cfg.step(&state, &action, steps)?;
        steps += 1;
        records.push(Transition {
            state: state.clone(),
            action,
            reward: out.reward,
            next_state: out.next_state.clone(),
            next_action: ActionVector::defaults(cfg.action_dims()),
            terminal: out.terminal,
        });
        if out.terminal {
            return Ok(records);
        }
        state = out.next_state;
    }
}

/// Generates `episodes` episodes from the environment start.
pub fn generate(cfg: &EnvConfig, episodes: usize, p_opt: f64, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    if episodes == 0 {
        return Err(Error::Config("need at least one episode".into()));
    }
    if !(0.0..=1.0).contains(&p_opt) {
        return Err(Error::Config("p_opt outside [0, 1]".into()));
    }
    let mut planner = Planner::new(cfg);
    let mut transitions = Vec::new();
    let mut ranges = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut rng = episode_rng(seed, e);
        let ep = generate_episode(cfg, &mut planner, p_opt, &mut rng)?;
        let start = transitions.len();
        transitions.extend(ep);
        ranges.push(start..transitions.len());
    }
    Ok(Dataset {
        transitions,
        episodes: ranges,
        env: cfg.clone(),
    })
}

/// The distinct actions appearing in the dataset, in sorted order.
pub fn unique_actions(ds: &Dataset) -> BTreeSet<ActionVector> {
    ds.transitions.iter().map(|t| t.action.clone()).collect()
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn unique_actions(&self) -> BTreeSet<ActionVector> {
        unique_actions(self)
    }

    /// Checks episode structure: SARSA chaining, terminal placement, and that
    /// replaying each episode's actions reproduces rewards and terminals.
    pub fn verify(&self) -> Result<()> {
        let mut covered = 0;
        for range in &self.episodes {
            if range.start != covered || range.end <= range.start || range.end > self.len() {
                return Err(Error::Config("episode ranges do not tile the dataset".into()));
            }
            covered = range.end;
            let ep = &self.transitions[range.clone()];
            let mut state = self.env.reset();
            for (t, rec) in ep.iter().enumerate() {
                if rec.state != state {
                    return Err(Error::Config("episode does not chain states".into()));
                }
                let out = self.env.step(&rec.state, &rec.action, t as u32)?;
                if out.next_state != rec.next_state
                    || out.reward.to_bits() != rec.reward.to_bits()
                    || out.terminal != rec.terminal
                {
                    return Err(Error::Config("replay disagrees with stored record".into()));
                }
                let last = t + 1 == ep.len();
                if last != rec.terminal {
                    return Err(Error::Config("terminal flag misplaced".into()));
                }
                if last {
                    if rec.next_action != ActionVector::defaults(self.env.action_dims()) {
                        return Err(Error::Config("terminal next_action not defaults".into()));
                    }
                } else if rec.next_action != ep[t + 1].action {
                    return Err(Error::Config("episode does not chain actions".into()));
                }
                state = out.next_state;
            }
        }
        if covered != self.len() {
            return Err(Error::Config("episode ranges do not cover the dataset".into()));
        }
        Ok(())
    }
}
