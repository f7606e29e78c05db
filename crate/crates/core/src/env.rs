//! The combinatorial navigation environment (CoNE).
//!
//! A `dims`-dimensional grid with `size` cells per axis. An action activates a
//! subset of `2 * dims` motion primitives; primitive `2i` moves axis `i` by +1
//! and primitive `2i + 1` moves it by -1, so opposing primitives cancel and
//! orthogonal ones compose into diagonal moves. Motion is clamped per axis.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reward for reaching the goal.
pub const GOAL_REWARD: f64 = 10.0;

/// Pit penalty is this multiple of the start-to-goal distance.
pub const PIT_PENALTY_SCALE: f64 = 10.0;

/// A grid coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridState(pub Vec<u16>);

impl GridState {
    pub fn dims(&self) -> usize {
        self.0.len()
    }
}

/// A joint action: one value per sub-action dimension.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionVector(pub Vec<u8>);

impl ActionVector {
    /// The all-defaults action (every sub-action set to 0).
    pub fn defaults(len: usize) -> Self {
        ActionVector(alloc::vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalKind {
    None,
    Goal,
    Pit,
    Horizon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: GridState,
    pub reward: f64,
    pub terminal: bool,
    pub terminal_kind: TerminalKind,
}

/// Environment description. Serialized as JSON with exactly these keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub dims: usize,
    pub size: u16,
    pub pits: BTreeSet<GridState>,
    pub start: GridState,
    pub goal: GridState,
    pub horizon: u32,
    pub seed: u64,
}

/// Default episode horizon for a grid of the given dimensionality.
pub fn default_horizon(dims: usize) -> u32 {
    if dims <= 8 {
        100
    } else {
        200
    }
}

/// Euclidean distance between two grid coordinates.
pub fn distance(a: &GridState, b: &GridState) -> f64 {
    let sq: f64 = a
        .0
        .iter()
        .zip(&b.0)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    libm::sqrt(sq)
}

/// Per-axis displacement of an action: `action[2i] - action[2i+1]`.
pub fn displacement(action: &ActionVector, dims: usize) -> Result<Vec<i32>> {
    if action.len() != 2 * dims {
        return Err(Error::Dimension {
            expected: 2 * dims,
            actual: action.len(),
        });
    }
    Ok(action
        .0
        .chunks_exact(2)
        .map(|p| i32::from(p[0] != 0) - i32::from(p[1] != 0))
        .collect())
}

/// True when no coordinate lies on the grid boundary.
pub fn is_interior(state: &GridState, size: u16) -> bool {
    state.0.iter().all(|&c| c > 0 && c + 1 < size)
}

impl EnvConfig {
    /// Number of sub-action dimensions (two primitives per axis).
    pub fn action_dims(&self) -> usize {
        2 * self.dims
    }

    /// Distance from start to goal.
    pub fn start_goal_distance(&self) -> f64 {
        distance(&self.start, &self.goal)
    }

    pub fn pit_reward(&self) -> f64 {
        -PIT_PENALTY_SCALE * self.start_goal_distance()
    }

    pub fn is_pit(&self, state: &GridState) -> bool {
        self.pits.contains(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::Config("dims must be positive".into()));
        }
        if self.size < 2 {
            return Err(Error::Config("size must be at least 2".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        self.check_state(&self.start)?;
        self.check_state(&self.goal)?;
        if self.start == self.goal {
            return Err(Error::Config("start equals goal".into()));
        }
        for pit in &self.pits {
            self.check_state(pit)?;
            if !is_interior(pit, self.size) {
                return Err(Error::Config(format!("pit {:?} is not interior", pit.0)));
            }
        }
        if self.is_pit(&self.start) || self.is_pit(&self.goal) {
            return Err(Error::Config("start or goal is a pit".into()));
        }
        Ok(())
    }

    /// Checks the dimension and bounds of a state.
    pub fn check_state(&self, state: &GridState) -> Result<()> {
        if state.dims() != self.dims {
            return Err(Error::Dimension {
                expected: self.dims,
                actual: state.dims(),
            });
        }
        if let Some(&c) = state.0.iter().find(|&&c| c >= self.size) {
            return Err(Error::Config(format!(
                "coordinate {c} out of bounds for size {}",
                self.size
            )));
        }
        Ok(())
    }

    pub fn reset(&self) -> GridState {
        self.start.clone()
    }

    /// Position after applying `action` with per-axis clamping.
    pub fn next_position(&self, state: &GridState, action: &ActionVector) -> Result<GridState> {
        let disp = displacement(action, self.dims)?;
        let max = i32::from(self.size) - 1;
        Ok(GridState(
            state
                .0
                .iter()
                .zip(disp)
                .map(|(&c, d)| (i32::from(c) + d).clamp(0, max) as u16)
                .collect(),
        ))
    }

    /// Advances one step. `steps_taken` counts steps already taken in the episode.
    pub fn step(
        &self,
        state: &GridState,
        action: &ActionVector,
        steps_taken: u32,
    ) -> Result<StepOutcome> {
        self.check_state(state)?;
        if steps_taken >= self.horizon {
            return Err(Error::Config(format!(
                "step {steps_taken} is past the horizon {}",
                self.horizon
            )));
        }
        let next_state = self.next_position(state, action)?;
        let (reward, kind) = self.transition_reward(&next_state);
        let kind = if kind == TerminalKind::None && steps_taken + 1 == self.horizon {
            TerminalKind::Horizon
        } else {
            kind
        };
        Ok(StepOutcome {
            next_state,
            reward,
            terminal: kind != TerminalKind::None,
            terminal_kind: kind,
        })
    }

    /// Reward for arriving in `next` and whether that arrival is absorbing.
    pub fn transition_reward(&self, next: &GridState) -> (f64, TerminalKind) {
        if *next == self.goal {
            (GOAL_REWARD, TerminalKind::Goal)
        } else if self.is_pit(next) {
            (self.pit_reward(), TerminalKind::Pit)
        } else {
            (-distance(next, &self.goal), TerminalKind::None)
        }
    }

    /// Number of interior states.
    pub fn interior_count(&self) -> u128 {
        interior_count(self.dims, self.size)
    }
}

fn interior_count(dims: usize, size: u16) -> u128 {
    u128::from(size.saturating_sub(2)).pow(dims as u32)
}

/// Builds an environment with start at the all-zeros corner, goal at the
/// opposite corner and `round(pit_fraction * interior)` pits drawn uniformly
/// from the interior.
pub fn random_environment(dims: usize, size: u16, pit_fraction: f64, seed: u64) -> Result<EnvConfig> {
    if !(0.0..=1.0).contains(&pit_fraction) {
        return Err(Error::Config(format!(
            "pit fraction {pit_fraction} outside [0, 1]"
        )));
    }
    let interior = interior_count(dims, size) as f64;
    let count = libm::round(pit_fraction * interior) as usize;
    random_environment_with_pits(dims, size, count, seed)
}

/// Like [`random_environment`] with an explicit pit count.
pub fn random_environment_with_pits(
    dims: usize,
    size: u16,
    pit_count: usize,
    seed: u64,
) -> Result<EnvConfig> {
    if dims == 0 || size < 2 {
        return Err(Error::Config("need dims >= 1 and size >= 2".into()));
    }
    if dims == 1 && pit_count > 0 {
        // A 1-D grid has no boundary detour around an interior pit.
        return Err(Error::Config("pits need at least two dimensions".into()));
    }
    let interior = interior_count(dims, size);
    if pit_count as u128 > interior {
        return Err(Error::Config(format!(
            "{pit_count} pits requested but only {interior} interior states"
        )));
    }
    let mut pits = BTreeSet::new();
    if pit_count > 0 {
        let inner = size - 2;
        let total = usize::try_from(interior)
            .map_err(|_| Error::Config("interior too large to sample".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for idx in index::sample(&mut rng, total, pit_count).into_iter() {
            let mut rest = idx;
            let coords = (0..dims)
                .map(|_| {
                    let c = (rest % usize::from(inner)) as u16 + 1;
                    rest /= usize::from(inner);
                    c
                })
                .collect();
            pits.insert(GridState(coords));
        }
    }
    let cfg = EnvConfig {
        dims,
        size,
        pits,
        start: GridState(alloc::vec![0; dims]),
        goal: GridState(alloc::vec![size - 1; dims]),
        horizon: default_horizon(dims),
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}
