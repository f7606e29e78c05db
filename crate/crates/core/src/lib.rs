//! Branch value estimation (BraVE) for offline reinforcement learning over
//! combinatorial action spaces.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the pure pieces:
//! the combinatorial navigation environment, the offline data generator, the
//! sparsified action tree, a small feed-forward value model with hand-written
//! backpropagation, the BraVE traversal/loss/beam-search routines and the
//! training loop, plus a value-iteration oracle and a constrained DQN baseline.
//! File formats, logging and the command line live in the `brave` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod dqn;
pub mod env;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod planner;
pub mod search;
pub mod train;
pub mod tree;
pub mod vi;

pub use dataset::{Dataset, Transition};
pub use env::{ActionVector, EnvConfig, GridState, StepOutcome, TerminalKind};
pub use error::{Error, Result};
pub use loss::{BraveConfig, LossBreakdown, PenaltyNorm, TargetGradient};
pub use model::{ModelConfig, ModelOutput, ParameterSet, ValueModel};
pub use search::{NodeEvaluator, TraversalResult};
pub use train::{TrainConfig, TrainLog, TrainRow};
pub use tree::{ActionTree, NodeId};
