//! Minibatch training of the value model on an offline dataset.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::{loss_and_gradient, BraveConfig, LossWorkspace, TargetGradient};
use crate::model::ValueModel;
use crate::tree::ActionTree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Hard target copy every this many gradient steps.
    pub target_sync_interval: usize,
    pub eval_interval: usize,
    pub seed: u64,
    #[serde(default)]
    pub target_gradient: TargetGradient,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch_size: 256,
            target_sync_interval: 100,
            eval_interval: 100,
            seed: 0,
            target_gradient: TargetGradient::Detached,
        }
    }
}

/// One row per evaluation point. Losses are averaged over the steps since
/// the previous row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub step: usize,
    pub total_loss: f64,
    pub td_loss: f64,
    pub brave_loss: f64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<TrainRow>,
}

impl TrainLog {
    pub fn final_return(&self) -> Option<f64> {
        self.rows.last().map(|r| r.eval_return_mean)
    }

    pub fn all_finite(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.total_loss.is_finite() && r.td_loss.is_finite() && r.brave_loss.is_finite())
    }
}

/// Running sums of the loss components between evaluation points.
#[derive(Default)]
pub(crate) struct LossMeter {
    total: f64,
    td: f64,
    brave: f64,
    steps: usize,
}

impl LossMeter {
    pub(crate) fn add(&mut self, total: f64, td: f64, brave: f64) {
        self.total += total;
        self.td += td;
        self.brave += brave;
        self.steps += 1;
    }

    pub(crate) fn row(&mut self, step: usize, eval: (f64, f64)) -> TrainRow {
        let n = self.steps.max(1) as f64;
        let row = TrainRow {
            step,
            total_loss: self.total / n,
            td_loss: self.td / n,
            brave_loss: self.brave / n,
            eval_return_mean: eval.0,
            eval_return_std: eval.1,
        };
        *self = LossMeter::default();
        row
    }
}

pub(crate) fn check_schedule(tc: &TrainConfig) -> Result<()> {
    if tc.batch_size == 0 || tc.target_sync_interval == 0 || tc.eval_interval == 0 {
        return Err(Error::Config("batch size and intervals must be positive".into()));
    }
    Ok(())
}

/// Trains `model` with `L = alpha * L_TD + L_BraVE`. `eval_hook` is called
/// every `eval_interval` steps and returns the evaluation mean and std.
pub fn train<H>(
    dataset: &Dataset,
    tree: &ActionTree,
    model: &mut ValueModel,
    cfg: &BraveConfig,
    tc: &TrainConfig,
    mut eval_hook: H,
) -> Result<TrainLog>
where
    H: FnMut(usize, &ValueModel) -> Result<(f64, f64)>,
{
    cfg.validate()?;
    check_schedule(tc)?;
    let env = &dataset.env;
    if model.config.action_dim != tree.action_dims()
        || model.config.m_max != tree.m_max()
        || model.config.state_dim != env.dims
        || tree.action_dims() != env.action_dims()
    {
        return Err(Error::Config(format!(
            "inconsistent dims: model {}x{}x{}, tree {}x{}, env {}",
            model.config.state_dim,
            model.config.action_dim,
            model.config.m_max,
            tree.action_dims(),
            tree.m_max(),
            env.dims
        )));
    }
    let mut log = TrainLog::default();
    if tc.steps == 0 {
        return Ok(log);
    }
    if dataset.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut ws = LossWorkspace::default();
    let mut grad = alloc::vec![0.0; model.params.len()];
    let mut meter = LossMeter::default();
    let inv = 1.0 / tc.batch_size as f64;

    for step in 1..=tc.steps {
        grad.fill(0.0);
        let (mut total, mut td, mut brave) = (0.0, 0.0, 0.0);
        for _ in 0..tc.batch_size {
            let t = &dataset.transitions[rng.random_range(0..dataset.len())];
            let l = loss_and_gradient(model, tree, t, env.size, cfg, tc.target_gradient, &mut ws, Some(&mut grad))?;
            total += l.total;
            td += l.td_component;
            brave += l.brave_component;
        }
        if !total.is_finite() {
            return Err(Error::Training { step, what: "loss" });
        }
        grad.iter_mut().for_each(|g| *g *= inv);
        model.apply_gradient(&grad, step)?;
        meter.add(total * inv, td * inv, brave * inv);
        if step % tc.target_sync_interval == 0 {
            model.sync_target();
        }
        if step % tc.eval_interval == 0 {
            let eval = eval_hook(step, model)?;
            log.rows.push(meter.row(step, eval));
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate;
    use crate::env::random_environment;
    use crate::model::ModelConfig;

    fn setup() -> (Dataset, ActionTree, ValueModel) {
        let env = random_environment(2, 5, 0.0, 0).unwrap();
        let ds = generate(&env, 10, 0.1, 1).unwrap();
        let tree = ActionTree::build_sparsified(&[2; 4], &ds.unique_actions()).unwrap();
        let mut mc = ModelConfig::new(2, 4, 2);
        mc.hidden_sizes = alloc::vec![16, 16];
        (ds, tree, ValueModel::new(mc))
    }

    #[test]
    fn zero_steps_is_a_no_op() {
        let (ds, tree, mut model) = setup();
        let before = model.params.clone();
        let tc = TrainConfig { steps: 0, ..Default::default() };
        let log = train(&ds, &tree, &mut model, &BraveConfig::default(), &tc, |_, _| Ok((0.0, 0.0))).unwrap();
        assert!(log.rows.is_empty());
        assert_eq!(model.params, before);
    }

    #[test]
    fn short_run_is_deterministic_and_finite() {
        let run = || {
            let (ds, tree, mut model) = setup();
            let tc = TrainConfig { steps: 30, batch_size: 8, eval_interval: 10, target_sync_interval: 5, ..Default::default() };
            let log = train(&ds, &tree, &mut model, &BraveConfig::default(), &tc, |s, _| Ok((s as f64, 0.0))).unwrap();
            (log, model.params)
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert_eq!(a.rows.len(), 3);
        assert!(a.all_finite());
        assert_eq!(a.final_return(), Some(30.0));
    }

    #[test]
    fn rejects_mismatched_model() {
        let (ds, tree, _) = setup();
        let mut model = ValueModel::new(ModelConfig::new(3, 6, 2));
        let r = train(&ds, &tree, &mut model, &BraveConfig::default(), &TrainConfig::default(), |_, _| Ok((0.0, 0.0)));
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
