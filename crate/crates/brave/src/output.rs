//! Run directories: per-seed CSV curves and checkpoints, a report and a
//! manifest describing how the run was produced.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use brave_core::{EnvConfig, TrainLog, TrainRow};
use serde::Serialize;

use crate::experiment::{EvalReport, EvalSummary, ExperimentSpec, SeedRun};
use crate::formats::save_checkpoint;

pub const CSV_COLUMNS: [&str; 6] = [
    "step",
    "total_loss",
    "td_loss",
    "brave_loss",
    "eval_return_mean",
    "eval_return_std",
];

pub fn write_log_csv<W: Write>(w: W, log: &TrainLog) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    // Header comes from the row struct; serializing keeps the column order.
    for row in &log.rows {
        out.serialize(row)?;
    }
    if log.rows.is_empty() {
        out.write_record(CSV_COLUMNS)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log_csv(path: &Path) -> anyhow::Result<TrainLog> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize::<TrainRow>().collect::<Result<_, _>>()?;
    Ok(TrainLog { rows })
}

#[derive(Serialize)]
struct SeedEntry<'a> {
    seed: u64,
    csv: String,
    checkpoint: String,
    final_eval: &'a Option<EvalSummary>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    dataset: Option<&'a Path>,
    env: &'a EnvConfig,
    spec: &'a ExperimentSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<(&'a str, f64)>,
    seeds: Vec<SeedEntry<'a>>,
    report: &'a EvalReport,
}

pub struct RunOutput<'a> {
    pub dir: &'a Path,
    pub dataset: Option<&'a Path>,
    pub env: &'a EnvConfig,
    pub spec: &'a ExperimentSpec,
    pub sweep: Option<(&'a str, f64)>,
}

/// Writes `seed_<s>.csv`, `seed_<s>.ckpt`, `report.json` and `manifest.json`.
pub fn write_run(out: &RunOutput<'_>, runs: &[SeedRun], report: &EvalReport) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(out.dir).with_context(|| format!("creating {}", out.dir.display()))?;
    let mut seeds = Vec::new();
    for run in runs {
        let csv_name = format!("seed_{}.csv", run.seed);
        let ck_name = format!("seed_{}.ckpt", run.seed);
        let f = fs::File::create(out.dir.join(&csv_name))?;
        write_log_csv(f, &run.log)?;
        save_checkpoint(&out.dir.join(&ck_name), &run.checkpoint)?;
        seeds.push(SeedEntry {
            seed: run.seed,
            csv: csv_name,
            checkpoint: ck_name,
            final_eval: &run.final_eval,
        });
    }
    fs::write(out.dir.join("report.json"), serde_json::to_vec_pretty(report)?)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        dataset: out.dataset,
        env: out.env,
        spec: out.spec,
        sweep: out.sweep,
        seeds,
        report,
    };
    let path = out.dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}
