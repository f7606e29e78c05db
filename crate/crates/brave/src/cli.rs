//! Command line interface.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use brave_core::dataset::generate;
use brave_core::env::{default_horizon, random_environment_with_pits};
use brave_core::eval::{beam_policy, evaluate_policy, PolicyEval};
use brave_core::vi::{value_iteration, ViConfig};
use brave_core::{BraveConfig, Dataset, EnvConfig, GridState, PenaltyNorm, TargetGradient};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::experiment::{run_experiment, ExperimentSpec, Method, SweepParam};
use crate::formats::{load_checkpoint, load_dataset, load_env, save_dataset, save_env, Policy};
use crate::output::{write_run, RunOutput};

#[derive(Parser, Debug)]
#[command(name = "brave", version, about = "Branch value estimation experiments on the combinatorial navigation grid")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate an environment and an offline dataset.
    GenData(GenDataArgs),
    /// Train the tree model on a dataset, one run per seed.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Train once per value of one hyperparameter.
    Sweep(SweepArgs),
    /// Solve an environment exactly with value iteration.
    OracleVi(OracleArgs),
    /// Train the DQN baseline restricted to dataset actions.
    BaselineDqn(TrainArgs),
}

#[derive(Args, Debug, Clone)]
pub struct EnvArgs {
    /// Load the environment from a JSON file instead of generating one.
    #[arg(long, conflicts_with_all = ["dims", "size", "pits"])]
    pub env: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    #[arg(long, default_value_t = 5)]
    pub size: u16,
    /// Number of pits placed uniformly in the interior.
    #[arg(long, default_value_t = 0)]
    pub pits: usize,
    /// Seed for pit placement; defaults to `--seed`.
    #[arg(long)]
    pub env_seed: Option<u64>,
    /// Episode horizon; defaults to 100 for up to 8 dimensions, else 200.
    #[arg(long)]
    pub horizon: Option<u32>,
}

impl EnvArgs {
    pub fn build(&self, seed: u64) -> anyhow::Result<EnvConfig> {
        if let Some(path) = &self.env {
            return Ok(load_env(path)?);
        }
        let mut env = random_environment_with_pits(self.dims, self.size, self.pits, self.env_seed.unwrap_or(seed))?;
        env.horizon = self.horizon.unwrap_or_else(|| default_horizon(self.dims));
        env.validate()?;
        Ok(env)
    }
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long, default_value_t = 500)]
    pub episodes: usize,
    /// Probability of taking the planner's action at each step.
    #[arg(long, default_value_t = 0.1)]
    pub p_opt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the environment as JSON.
    #[arg(long)]
    pub env_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NormArg {
    L1,
    L2,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GradArg {
    Detached,
    Full,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 100)]
    pub eval_interval: usize,
    #[arg(long, default_value_t = 10)]
    pub eval_episodes: usize,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub target_sync: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    #[arg(long, default_value_t = 10)]
    pub beam_width: usize,
    #[arg(long, value_enum, default_value_t = NormArg::L1)]
    pub penalty: NormArg,
    #[arg(long, value_enum, default_value_t = GradArg::Detached)]
    pub target_gradient: GradArg,
}

impl TrainArgs {
    pub fn spec(&self, method: Method) -> ExperimentSpec {
        ExperimentSpec {
            method,
            brave: BraveConfig {
                alpha: self.alpha,
                lambda: self.lambda,
                delta: self.delta,
                gamma: self.gamma,
                beam_width: self.beam_width,
                penalty_norm: match self.penalty {
                    NormArg::L1 => PenaltyNorm::L1,
                    NormArg::L2 => PenaltyNorm::L2,
                },
            },
            hidden_sizes: self.hidden.clone(),
            learning_rate: self.lr,
            batch_size: self.batch_size,
            steps: self.steps,
            eval_interval: self.eval_interval,
            eval_episodes: self.eval_episodes,
            target_sync_interval: self.target_sync,
            target_gradient: match self.target_gradient {
                GradArg::Detached => TargetGradient::Detached,
                GradArg::Full => TargetGradient::Full,
            },
            seeds: self.seeds.clone(),
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 10)]
    pub beam_width: usize,
    /// Evaluate on this environment instead of the one stored in the checkpoint.
    #[arg(long)]
    pub env: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Brave)]
    pub method: MethodArg,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Brave,
    Dqn,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Take the environment from a dataset file.
    #[arg(long, conflicts_with = "env")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Write the per-state table as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train_cmd(&a, Method::Brave),
        Command::BaselineDqn(a) => train_cmd(&a, Method::Dqn),
        Command::Eval(a) => eval_cmd(&a),
        Command::Sweep(a) => sweep_cmd(&a),
        Command::OracleVi(a) => oracle_cmd(&a),
    }
}

fn gen_data(a: &GenDataArgs) -> anyhow::Result<()> {
    let env = a.env.build(a.seed)?;
    let ds = generate(&env, a.episodes, a.p_opt, a.seed)?;
    save_dataset(&a.out, &ds).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.env_out {
        save_env(p, &env)?;
    }
    println!(
        "wrote {} transitions in {} episodes ({} unique actions) to {}",
        ds.len(),
        ds.episodes.len(),
        ds.unique_actions().len(),
        a.out.display()
    );
    Ok(())
}

fn load_data(path: &Path) -> anyhow::Result<Dataset> {
    load_dataset(path).with_context(|| format!("reading {}", path.display()))
}

fn print_report(label: &str, report: &crate::experiment::EvalReport) {
    println!(
        "{label}: final return {:.3} +- {:.3} over seeds {:?} (goal {:.2}, pit {:.2}, horizon {:.2})",
        report.final_mean, report.final_std, report.seeds, report.goal_rate, report.pit_rate, report.horizon_rate
    );
}

fn train_cmd(a: &TrainArgs, method: Method) -> anyhow::Result<()> {
    let ds = load_data(&a.data)?;
    let spec = a.spec(method);
    let (runs, report) = run_experiment(&spec, &ds)?;
    let manifest = write_run(
        &RunOutput {
            dir: &a.out,
            dataset: Some(&a.data),
            env: &ds.env,
            spec: &spec,
            sweep: None,
        },
        &runs,
        &report,
    )?;
    print_report(&format!("{method:?}"), &report);
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn sweep_cmd(a: &SweepArgs) -> anyhow::Result<()> {
    let ds = load_data(&a.train.data)?;
    let method = match a.method {
        MethodArg::Brave => Method::Brave,
        MethodArg::Dqn => Method::Dqn,
    };
    for &value in &a.values {
        let mut spec = a.train.spec(method);
        a.param.apply(&mut spec, value)?;
        let dir = a.train.out.join(format!("{}={value}", a.param.name()));
        let (runs, report) = run_experiment(&spec, &ds)?;
        write_run(
            &RunOutput {
                dir: &dir,
                dataset: Some(&a.train.data),
                env: &ds.env,
                spec: &spec,
                sweep: Some((a.param.name(), value)),
            },
            &runs,
            &report,
        )?;
        print_report(&format!("{}={value}", a.param.name()), &report);
    }
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> anyhow::Result<()> {
    let ck = load_checkpoint(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let env = match &a.env {
        Some(p) => load_env(p)?,
        None => ck.header.env().clone(),
    };
    let e: PolicyEval = match ck.into_policy()? {
        Policy::Brave { model, tree } => {
            if model.config.state_dim != env.dims {
                bail!("checkpoint expects {} dimensions, environment has {}", model.config.state_dim, env.dims);
            }
            evaluate_policy(&env, &mut beam_policy(&model, &tree, env.size, a.beam_width), a.episodes)?
        }
        Policy::Dqn(dqn) => evaluate_policy(&env, &mut dqn.policy(env.size), a.episodes)?,
    };
    println!(
        "return {:.4} +- {:.4} over {} episodes (goal {:.2}, pit {:.2}, horizon {:.2})",
        e.mean,
        e.std,
        a.episodes,
        e.goal_rate,
        e.pit_rate,
        e.horizon_rate
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct OracleRow {
    state: GridState,
    max_q: f64,
    action: brave_core::ActionVector,
}

fn oracle_cmd(a: &OracleArgs) -> anyhow::Result<()> {
    let env = match &a.data {
        Some(p) => load_data(p)?.env,
        None => a.env.build(a.seed)?,
    };
    let vc = ViConfig { gamma: a.gamma, ..Default::default() };
    let table = value_iteration(&env, &vc)?;
    let mut policy = |s: &GridState| table.greedy_action(s).clone();
    let e = evaluate_policy(&env, &mut policy, 1)?;
    println!(
        "converged after {} sweeps (residual {:.2e}); max Q at start {:.4}; greedy return {:.4} ({})",
        table.sweeps,
        table.residual,
        table.max_q(&env.start),
        e.mean,
        if e.goal_rate == 1.0 { "goal" } else if e.pit_rate == 1.0 { "pit" } else { "horizon" }
    );
    if env.dims == 2 {
        for y in 0..env.size {
            let line: Vec<String> = (0..env.size)
                .map(|x| {
                    let s = GridState(vec![x, y]);
                    if env.is_pit(&s) {
                        "   pit".to_string()
                    } else {
                        format!("{:>6.2}", table.max_q(&s))
                    }
                })
                .collect();
            println!("{}", line.join(" "));
        }
    }
    if let Some(out) = &a.out {
        let rows: Vec<OracleRow> = (0..table.values.len())
            .map(|i| {
                let s = table.state(i);
                OracleRow {
                    max_q: table.values[i],
                    action: table.actions[i].clone(),
                    state: s,
                }
            })
            .collect();
        std::fs::write(out, serde_json::to_vec_pretty(&rows)?)?;
    }
    Ok(())
}
