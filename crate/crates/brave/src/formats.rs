//! Binary dataset and checkpoint files.
//!
//! Both start with a 4-byte magic, a little-endian `u16` version and a
//! length-prefixed JSON header. All numbers are little-endian.
//!
//! Dataset body: `u64` transition count, then per transition the state
//! (`u16` x D), action (`u8` x 2D), reward (`f64`), next state, next action
//! and a terminal byte; then a `u64` episode count and `(u64, u64)` ranges.
//!
//! Checkpoint body: `u64` parameter count followed by `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use brave_core::dqn::ConstrainedDqn;
use brave_core::{ActionTree, ActionVector, Dataset, EnvConfig, GridState, ModelConfig, Transition, ValueModel};
use serde::{Deserialize, Serialize};

pub const DATASET_MAGIC: &[u8; 4] = b"BRVE";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BRVM";
pub const VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    Magic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("invalid contents: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] brave_core::Error),
}

pub type FormatResult<T> = Result<T, FormatError>;

fn write_header<W: Write, H: Serialize>(w: &mut W, magic: &[u8; 4], header: &H) -> FormatResult<()> {
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let json = serde_json::to_vec(header)?;
    let len = u32::try_from(json.len()).map_err(|_| FormatError::Invalid("header too long".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

fn read_header<R: Read, H: for<'de> Deserialize<'de>>(r: &mut R, magic: &[u8; 4]) -> FormatResult<H> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(FormatError::Magic { found, expected: *magic });
    }
    let version = u16::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let len = u32::from_le_bytes(read_array(r)?) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    Ok(serde_json::from_slice(&json)?)
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn expect_end<R: Read>(r: &mut R) -> FormatResult<()> {
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(FormatError::Invalid("trailing bytes".into()));
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> FormatResult<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_len<R: Read>(r: &mut R) -> FormatResult<usize> {
    usize::try_from(read_u64(r)?).map_err(|_| FormatError::Invalid("length overflow".into()))
}

fn write_state<W: Write>(w: &mut W, s: &GridState) -> std::io::Result<()> {
    s.0.iter().try_for_each(|c| w.write_all(&c.to_le_bytes()))
}

fn read_state<R: Read>(r: &mut R, dims: usize) -> FormatResult<GridState> {
    (0..dims)
        .map(|_| Ok(u16::from_le_bytes(read_array(r)?)))
        .collect::<FormatResult<_>>()
        .map(GridState)
}

fn read_action<R: Read>(r: &mut R, n: usize) -> FormatResult<ActionVector> {
    let mut a = vec![0u8; n];
    r.read_exact(&mut a)?;
    Ok(ActionVector(a))
}

pub fn write_dataset<W: Write>(w: &mut W, ds: &Dataset) -> FormatResult<()> {
    write_header(w, DATASET_MAGIC, &ds.env)?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    for t in &ds.transitions {
        write_state(w, &t.state)?;
        w.write_all(&t.action.0)?;
        w.write_all(&t.reward.to_le_bytes())?;
        write_state(w, &t.next_state)?;
        w.write_all(&t.next_action.0)?;
        w.write_all(&[u8::from(t.terminal)])?;
    }
    w.write_all(&(ds.episodes.len() as u64).to_le_bytes())?;
    for e in &ds.episodes {
        w.write_all(&(e.start as u64).to_le_bytes())?;
        w.write_all(&(e.end as u64).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: &mut R) -> FormatResult<Dataset> {
    let env: EnvConfig = read_header(r, DATASET_MAGIC)?;
    env.validate()?;
    let (d, n) = (env.dims, env.action_dims());
    let count = read_len(r)?;
    let mut transitions = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let state = read_state(r, d)?;
        let action = read_action(r, n)?;
        let reward = f64::from_le_bytes(read_array(r)?);
        let next_state = read_state(r, d)?;
        let next_action = read_action(r, n)?;
        let terminal = match read_array::<_, 1>(r)?[0] {
            0 => false,
            1 => true,
            b => return Err(FormatError::Invalid(format!("terminal byte {b}"))),
        };
        transitions.push(Transition { state, action, reward, next_state, next_action, terminal });
    }
    let episodes = (0..read_len(r)?)
        .map(|_| Ok(read_len(r)?..read_len(r)?))
        .collect::<FormatResult<Vec<_>>>()?;
    expect_end(r)?;
    Ok(Dataset { transitions, episodes, env })
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> FormatResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> FormatResult<Dataset> {
    read_dataset(&mut BufReader::new(File::open(path)?))
}

/// What a checkpoint holds; enough to rebuild the policy without the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointHeader {
    Brave {
        env: EnvConfig,
        model: ModelConfig,
        cardinalities: Vec<usize>,
        actions: Vec<ActionVector>,
    },
    Dqn {
        env: EnvConfig,
        hidden_sizes: Vec<usize>,
        learning_rate: f64,
        actions: Vec<ActionVector>,
    },
}

impl CheckpointHeader {
    pub fn env(&self) -> &EnvConfig {
        match self {
            CheckpointHeader::Brave { env, .. } | CheckpointHeader::Dqn { env, .. } => env,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
}

/// A loaded policy.
pub enum Policy {
    Brave { model: ValueModel, tree: ActionTree },
    Dqn(ConstrainedDqn),
}

impl Checkpoint {
    pub fn brave(env: &EnvConfig, model: &ValueModel, tree: &ActionTree) -> Self {
        Checkpoint {
            header: CheckpointHeader::Brave {
                env: env.clone(),
                model: model.config.clone(),
                cardinalities: tree.cardinalities().to_vec(),
                actions: tree.leaf_actions(),
            },
            params: model.params.values.clone(),
        }
    }

    pub fn dqn(env: &EnvConfig, dqn: &ConstrainedDqn, hidden_sizes: &[usize]) -> Self {
        Checkpoint {
            header: CheckpointHeader::Dqn {
                env: env.clone(),
                hidden_sizes: hidden_sizes.to_vec(),
                learning_rate: dqn.learning_rate,
                actions: dqn.actions.clone(),
            },
            params: dqn.params.values.clone(),
        }
    }

    pub fn into_policy(self) -> FormatResult<Policy> {
        match self.header {
            CheckpointHeader::Brave { model, cardinalities, actions, .. } => {
                let tree = ActionTree::build_sparsified(&cardinalities, &actions)?;
                let model = ValueModel::from_parameters(model, self.params)?;
                Ok(Policy::Brave { model, tree })
            }
            CheckpointHeader::Dqn { env, hidden_sizes, learning_rate, actions } => {
                let set = actions.into_iter().collect();
                let mut dqn = ConstrainedDqn::new(env.dims, &set, &hidden_sizes, learning_rate, 0)?;
                if dqn.params.len() != self.params.len() {
                    return Err(FormatError::Invalid(format!(
                        "expected {} parameters, found {}",
                        dqn.params.len(),
                        self.params.len()
                    )));
                }
                dqn.params.values = self.params;
                dqn.target = dqn.params.clone();
                Ok(Policy::Dqn(dqn))
            }
        }
    }
}

pub fn write_checkpoint<W: Write>(w: &mut W, ck: &Checkpoint) -> FormatResult<()> {
    write_header(w, CHECKPOINT_MAGIC, &ck.header)?;
    w.write_all(&(ck.params.len() as u64).to_le_bytes())?;
    ck.params.iter().try_for_each(|p| w.write_all(&p.to_le_bytes()))?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> FormatResult<Checkpoint> {
    let header = read_header(r, CHECKPOINT_MAGIC)?;
    let n = read_len(r)?;
    let params = (0..n)
        .map(|_| Ok(f64::from_le_bytes(read_array(r)?)))
        .collect::<FormatResult<_>>()?;
    expect_end(r)?;
    Ok(Checkpoint { header, params })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> FormatResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, ck)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> FormatResult<Checkpoint> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

pub fn save_env(path: &Path, env: &EnvConfig) -> FormatResult<()> {
    std::fs::write(path, serde_json::to_vec_pretty(env)?)?;
    Ok(())
}

pub fn load_env(path: &Path) -> FormatResult<EnvConfig> {
    let env: EnvConfig = serde_json::from_slice(&std::fs::read(path)?)?;
    env.validate()?;
    Ok(env)
}
