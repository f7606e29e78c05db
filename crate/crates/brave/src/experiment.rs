//! Multi-seed training runs for the tree model and the DQN baseline.

use brave_core::dqn::{train_dqn, ConstrainedDqn};
use brave_core::eval::{beam_policy, evaluate_policy, mean_std, PolicyEval};
use brave_core::train::train;
use brave_core::{
    ActionTree, BraveConfig, Dataset, Error, ModelConfig, TargetGradient, TrainConfig, TrainLog, ValueModel,
};
use serde::{Deserialize, Serialize};

use crate::formats::Checkpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Brave,
    Dqn,
}

/// Everything needed to reproduce a run on a given dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub method: Method,
    pub brave: BraveConfig,
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub target_sync_interval: usize,
    pub target_gradient: TargetGradient,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let tc = TrainConfig::default();
        ExperimentSpec {
            method: Method::Brave,
            brave: BraveConfig::default(),
            hidden_sizes: vec![256, 256],
            learning_rate: 3e-4,
            batch_size: tc.batch_size,
            steps: tc.steps,
            eval_interval: tc.eval_interval,
            eval_episodes: 10,
            target_sync_interval: tc.target_sync_interval,
            target_gradient: tc.target_gradient,
            seeds: vec![0],
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> brave_core::Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        self.brave.validate()
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            target_sync_interval: self.target_sync_interval,
            eval_interval: self.eval_interval,
            seed,
            target_gradient: self.target_gradient,
        }
    }
}

/// Termination rates and returns of one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean: f64,
    pub std: f64,
    pub goal_rate: f64,
    pub pit_rate: f64,
    pub horizon_rate: f64,
}

impl From<&PolicyEval> for EvalSummary {
    fn from(e: &PolicyEval) -> Self {
        EvalSummary {
            mean: e.mean,
            std: e.std,
            goal_rate: e.goal_rate,
            pit_rate: e.pit_rate,
            horizon_rate: e.horizon_rate,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub log: TrainLog,
    /// Evaluation at the last step; `None` when no evaluation point was reached.
    pub final_eval: Option<EvalSummary>,
    pub checkpoint: Checkpoint,
}

impl SeedRun {
    pub fn final_return(&self) -> Option<f64> {
        self.final_eval.as_ref().map(|e| e.mean)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub final_returns: Vec<f64>,
    /// Mean and population std of the per-seed final returns.
    pub final_mean: f64,
    pub final_std: f64,
    pub goal_rate: f64,
    pub pit_rate: f64,
    pub horizon_rate: f64,
}

impl EvalReport {
    pub fn from_runs(runs: &[SeedRun]) -> Self {
        let evals: Vec<&EvalSummary> = runs.iter().filter_map(|r| r.final_eval.as_ref()).collect();
        let final_returns: Vec<f64> = evals.iter().map(|e| e.mean).collect();
        let (final_mean, final_std) = mean_std(&final_returns);
        let avg = |f: fn(&EvalSummary) -> f64| mean_std(&evals.iter().map(|e| f(e)).collect::<Vec<_>>()).0;
        EvalReport {
            seeds: runs.iter().map(|r| r.seed).collect(),
            final_mean,
            final_std,
            goal_rate: avg(|e| e.goal_rate),
            pit_rate: avg(|e| e.pit_rate),
            horizon_rate: avg(|e| e.horizon_rate),
            final_returns,
        }
    }
}

/// Sparsified tree over the dataset's actions, binary in every dimension.
pub fn dataset_tree(ds: &Dataset) -> brave_core::Result<ActionTree> {
    ActionTree::build_sparsified(&vec![2; ds.env.action_dims()], &ds.unique_actions())
}

pub fn model_config(spec: &ExperimentSpec, ds: &Dataset, tree: &ActionTree, seed: u64) -> ModelConfig {
    let mut mc = ModelConfig::new(ds.env.dims, tree.action_dims(), tree.m_max());
    mc.hidden_sizes = spec.hidden_sizes.clone();
    mc.learning_rate = spec.learning_rate;
    mc.seed = seed;
    mc
}

pub fn run_brave_seed(spec: &ExperimentSpec, ds: &Dataset, tree: &ActionTree, seed: u64) -> brave_core::Result<SeedRun> {
    let env = &ds.env;
    let mut model = ValueModel::new(model_config(spec, ds, tree, seed));
    let mut last = None;
    let log = train(ds, tree, &mut model, &spec.brave, &spec.train_config(seed), |_, m| {
        let mut policy = beam_policy(m, tree, env.size, spec.brave.beam_width);
        let e = evaluate_policy(env, &mut policy, spec.eval_episodes)?;
        let out = (e.mean, e.std);
        last = Some(EvalSummary::from(&e));
        Ok(out)
    })?;
    Ok(SeedRun {
        seed,
        log,
        final_eval: last,
        checkpoint: Checkpoint::brave(env, &model, tree),
    })
}

pub fn run_dqn_seed(spec: &ExperimentSpec, ds: &Dataset, seed: u64) -> brave_core::Result<SeedRun> {
    let env = &ds.env;
    let mut dqn = ConstrainedDqn::new(env.dims, &ds.unique_actions(), &spec.hidden_sizes, spec.learning_rate, seed)?;
    let mut last = None;
    let log = train_dqn(ds, &mut dqn, &spec.brave, &spec.train_config(seed), |_, d| {
        let e = evaluate_policy(env, &mut d.policy(env.size), spec.eval_episodes)?;
        let out = (e.mean, e.std);
        last = Some(EvalSummary::from(&e));
        Ok(out)
    })?;
    Ok(SeedRun {
        seed,
        log,
        final_eval: last,
        checkpoint: Checkpoint::dqn(env, &dqn, &spec.hidden_sizes),
    })
}

/// Runs every seed of `spec` in order. Seeds share nothing but the dataset.
pub fn run_experiment(spec: &ExperimentSpec, ds: &Dataset) -> brave_core::Result<(Vec<SeedRun>, EvalReport)> {
    spec.validate()?;
    let tree = dataset_tree(ds)?;
    let runs = spec
        .seeds
        .iter()
        .map(|&seed| match spec.method {
            Method::Brave => run_brave_seed(spec, ds, &tree, seed),
            Method::Dqn => run_dqn_seed(spec, ds, seed),
        })
        .collect::<brave_core::Result<Vec<_>>>()?;
    let report = EvalReport::from_runs(&runs);
    Ok((runs, report))
}

/// Parameters a sweep can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Delta,
    Alpha,
    Lambda,
    Gamma,
    BeamWidth,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Delta => "delta",
            SweepParam::Alpha => "alpha",
            SweepParam::Lambda => "lambda",
            SweepParam::Gamma => "gamma",
            SweepParam::BeamWidth => "beam_width",
        }
    }

    pub fn apply(self, spec: &mut ExperimentSpec, value: f64) -> brave_core::Result<()> {
        match self {
            SweepParam::Delta => spec.brave.delta = value,
            SweepParam::Alpha => spec.brave.alpha = value,
            SweepParam::Lambda => spec.brave.lambda = value,
            SweepParam::Gamma => spec.brave.gamma = value,
            SweepParam::BeamWidth => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("beam width {value} is not a positive integer")));
                }
                spec.brave.beam_width = value as usize;
            }
        }
        spec.brave.validate()
    }
}
