use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no path to the goal from {0:?}")]
    Planning(Vec<u16>),

    #[error("tree construction failed: {0}")]
    Tree(String),

    #[error("action {0:?} is not a leaf of the action tree")]
    Lookup(Vec<u8>),

    #[error("non-finite {what} at training step {step}")]
    Training { step: usize, what: &'static str },

    #[error("problem too large to enumerate: {0} state-action pairs")]
    TooLarge(u128),
}
