//! Experiment runner: repeats of averaged lifelong runs, per-task
//! aggregation, CSV output, parameter sweeps and plots.
//!
//! An experiment with `R` repeats and `A` inner runs executes `R·A`
//! independent lifelong runs, run `(r, a)` seeded by `RunSeed(seed, r, a)`.
//! For every task index the `A` inner runs of a repeat are averaged, and the
//! CSV reports the mean and sample standard deviation of those `R` averages.

mod config;
mod plot;
mod sweep;

pub use config::{Algorithm, ExperimentConfig, HyperpriorKind};
pub use plot::{plot_csvs, read_aggregate_csv, render_svg, Metric};
pub use sweep::{run_sweep, sweep_cells, SweepCell, SweepOutcome};

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::baselines::{arr_run, lfs_run};
use crate::error::{Error, Result};
use crate::lifelong::RunRecord;
use crate::mcmc::mcmc_lifelong_run;
use crate::par::{map_range, Execution};
use crate::seed::RunSeed;
use crate::vi::vi_lifelong_run;

/// Exact header of the aggregate CSV.
pub const CSV_HEADER: [&str; 7] = [
    "task_index",
    "mean_avg_reward",
    "std_avg_reward",
    "mean_bound",
    "std_bound",
    "mean_kl_hyper",
    "mean_task_kl_sum",
];

/// Header of the per-run CSV written under `raw`.
pub const RAW_HEADER: [&str; 8] = [
    "repeat",
    "inner",
    "task_index",
    "avg_reward",
    "total_reward",
    "bound_value",
    "kl_hyper",
    "expected_task_kl_sum",
];

/// Process exit code for a failed command: 1 for configuration problems
/// (including a violated Bernstein constraint), 2 for runtime failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::ConstraintViolation(_) | Error::Schema(_) => 1,
        _ => 2,
    }
}

/// Exit code of a sweep in which some cells failed.
pub const PARTIAL_SWEEP_EXIT: i32 = 3;

/// Records of one lifelong run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub repeat: usize,
    pub inner: usize,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub task_index: usize,
    pub mean_avg_reward: f64,
    pub std_avg_reward: f64,
    pub mean_bound: f64,
    pub std_bound: f64,
    pub mean_kl_hyper: f64,
    pub mean_task_kl_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<AggregateRow>,
    pub runs: Vec<RunOutput>,
}

impl ExperimentResult {
    pub fn final_row(&self) -> &AggregateRow {
        self.rows.last().expect("an experiment has at least one task")
    }
}

/// One lifelong run of the configured algorithm.
pub fn single_run(cfg: &ExperimentConfig, seed: &RunSeed) -> Result<Vec<RunRecord>> {
    let env = cfg.env()?;
    let bound = cfg.bound_config();
    match cfg.algorithm {
        Algorithm::Lfs => lfs_run(&env, &bound, seed),
        Algorithm::Arr => arr_run(&env, &bound, seed),
        Algorithm::Pbvi => vi_lifelong_run(&env, &cfg.hyperprior_dist()?, &bound, &cfg.vi_options(), seed),
        Algorithm::Pbmcmc => mcmc_lifelong_run(&env, &cfg.hyperprior_dist()?, &bound, &cfg.mcmc_options(), seed),
    }
}

/// Runs all `R·A` lifelong runs (in parallel when available) and aggregates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(cfg, Execution::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    cfg.validate()?;
    let a = cfg.inner_runs;
    let outputs = map_range(exec, cfg.repeats * a, |idx| {
        let (repeat, inner) = (idx / a, idx % a);
        single_run(cfg, &RunSeed::new(cfg.seed, repeat as u64, inner as u64)).map(|records| RunOutput {
            repeat,
            inner,
            records,
        })
    });
    let runs = outputs.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = aggregate(&runs, cfg.repeats, cfg.inner_runs)?;
    Ok(ExperimentResult { rows, runs })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divisor `len − 1`); 0 for a single value.
fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Per-task aggregation of runs ordered by `(repeat, inner)`.
pub fn aggregate(runs: &[RunOutput], repeats: usize, inner_runs: usize) -> Result<Vec<AggregateRow>> {
    if runs.len() != repeats * inner_runs || runs.is_empty() {
        return Err(Error::invalid(format!(
            "expected {} runs, got {}",
            repeats * inner_runs,
            runs.len()
        )));
    }
    let n = runs[0].records.len();
    if runs.iter().any(|r| r.records.len() != n) {
        return Err(Error::invalid("runs have different numbers of tasks"));
    }
    let mut rows = Vec::with_capacity(n);
    for t in 0..n {
        let mut rewards = Vec::with_capacity(repeats);
        let mut bounds = Vec::with_capacity(repeats);
        let (mut kl_hyper, mut task_kl) = (0.0, 0.0);
        for r in 0..repeats {
            let group = &runs[r * inner_runs..(r + 1) * inner_runs];
            let recs: Vec<&RunRecord> = group.iter().map(|g| &g.records[t]).collect();
            rewards.push(recs.iter().map(|x| x.avg_reward).sum::<f64>() / inner_runs as f64);
            bounds.push(recs.iter().map(|x| x.bound_value).sum::<f64>() / inner_runs as f64);
            kl_hyper += recs.iter().map(|x| x.kl_hyper).sum::<f64>();
            task_kl += recs.iter().map(|x| x.expected_task_kl_sum).sum::<f64>();
        }
        let total = runs.len() as f64;
        rows.push(AggregateRow {
            task_index: t + 1,
            mean_avg_reward: mean(&rewards),
            std_avg_reward: sample_std(&rewards),
            mean_bound: mean(&bounds),
            std_bound: sample_std(&bounds),
            mean_kl_hyper: kl_hyper / total,
            mean_task_kl_sum: task_kl / total,
        });
    }
    Ok(rows)
}

fn float(x: f64) -> String {
    format!("{x}")
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.task_index.to_string(),
            float(r.mean_avg_reward),
            float(r.std_avg_reward),
            float(r.mean_bound),
            float(r.std_bound),
            float(r.mean_kl_hyper),
            float(r.mean_task_kl_sum),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_raw_csv<W: Write>(runs: &[RunOutput], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RAW_HEADER)?;
    for run in runs {
        for rec in &run.records {
            w.write_record([
                run.repeat.to_string(),
                run.inner.to_string(),
                rec.task_index.to_string(),
                float(rec.avg_reward),
                float(rec.total_reward),
                float(rec.bound_value),
                float(rec.kl_hyper),
                float(rec.expected_task_kl_sum),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Paths written by [`run_to_dir`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunFiles {
    pub csv: PathBuf,
    pub raw: Option<PathBuf>,
}

/// Runs `cfg` and writes `<out_dir>/<label>.csv` (and `<label>.raw.csv`
/// when `cfg.raw`).
pub fn run_to_dir(cfg: &ExperimentConfig) -> Result<(ExperimentResult, RunFiles)> {
    let result = run_experiment(cfg)?;
    let files = write_outputs(cfg, &result, &cfg.out_dir)?;
    Ok((result, files))
}

pub(crate) fn write_outputs(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path) -> Result<RunFiles> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.csv", cfg.label()));
    write_aggregate_csv(&result.rows, std::fs::File::create(&csv)?)?;
    let raw = if cfg.raw {
        let path = dir.join(format!("{}.raw.csv", cfg.label()));
        write_raw_csv(&result.runs, std::fs::File::create(&path)?)?;
        Some(path)
    } else {
        None
    };
    Ok(RunFiles { csv, raw })
}
