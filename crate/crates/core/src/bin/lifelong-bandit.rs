//! Command-line experiment runner.
//!
//! ```text
//! lifelong-bandit run   [--config FILE] [overrides...]
//! lifelong-bandit sweep [--config FILE] [overrides...] [--union-bound-delta]
//! lifelong-bandit plot  CSV... [--out-dir DIR]
//! ```
//!
//! Flags override values from the TOML config file, which in turn override
//! the built-in defaults.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lifelong_bandit::base_learner::RewardExponent;
use lifelong_bandit::bounds::BoundKind;
use lifelong_bandit::environments::EnvId;
use lifelong_bandit::harness::{
    exit_code, plot_csvs, run_sweep, run_to_dir, Algorithm, ExperimentConfig, HyperpriorKind, PARTIAL_SWEEP_EXIT,
};
use lifelong_bandit::{Error, Result};

#[derive(Parser)]
#[command(name = "lifelong-bandit", version, about = "PAC-Bayesian lifelong bandit experiments", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its aggregate CSV.
    Run(ConfigArgs),
    /// Run every cell of the temperature × ε/τ grid.
    Sweep(ConfigArgs),
    /// Plot aggregate CSVs, one SVG per metric.
    Plot {
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Debug)]
struct Pairs(Vec<(f64, f64)>);

fn parse_pairs(s: &str) -> std::result::Result<Pairs, String> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (a, b) = p.split_once(',').ok_or_else(|| format!("'{p}' is not a pair 'a,b'"))?;
            let a = a.trim().parse::<f64>().map_err(|e| format!("'{a}': {e}"))?;
            let b = b.trim().parse::<f64>().map_err(|e| format!("'{b}': {e}"))?;
            Ok((a, b))
        })
        .collect::<std::result::Result<_, String>>()
        .map(Pairs)
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    environment: Option<EnvId>,
    /// Custom Beta shapes, e.g. "5,20;5,20;20,5".
    #[arg(long, value_parser = parse_pairs)]
    shapes: Option<Pairs>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    bound: Option<BoundKind>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    t2: Option<f64>,
    /// Use the largest valid Bernstein T2 = (ε/K)√m.
    #[arg(long)]
    t2_max: bool,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    c_n: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k_iters: Option<usize>,
    #[arg(long)]
    inner_runs: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hyperprior: Option<HyperpriorKind>,
    #[arg(long, value_delimiter = ',')]
    hyperprior_mean: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    hyperprior_std: Option<Vec<f64>>,
    #[arg(long)]
    exponent: Option<RewardExponent>,
    #[arg(long)]
    bound_samples: Option<usize>,
    #[arg(long)]
    adam_lr: Option<f64>,
    #[arg(long)]
    adam_beta1: Option<f64>,
    #[arg(long)]
    adam_beta2: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    #[arg(long)]
    psgld_step_size: Option<f64>,
    #[arg(long)]
    psgld_decay: Option<f64>,
    #[arg(long)]
    psgld_eps: Option<f64>,
    /// Run Bernstein configurations that violate the λ2 limit (bound is NaN).
    #[arg(long)]
    allow_invalid_bound: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output file stem.
    #[arg(long)]
    name: Option<String>,
    /// Also write per-run records.
    #[arg(long)]
    raw: bool,
    /// Temperature grid, e.g. "5,1;15,3;50,10".
    #[arg(long, value_parser = parse_pairs)]
    temperatures: Option<Pairs>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    /// Run every sweep cell with δ/N.
    #[arg(long)]
    union_bound_delta: bool,
}

macro_rules! set {
    ($cfg:ident, $args:ident, $($field:ident),*) => {
        $(if let Some(v) = $args.$field { $cfg.$field = v; })*
    };
}

impl ConfigArgs {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let a = self;
        set!(
            cfg, a, environment, algorithm, bound, t1, t2, epsilon, tau, delta, c_n, n, m, inner_runs, repeats, seed,
            hyperprior, exponent, adam_lr, adam_beta1, adam_beta2, adam_eps, psgld_step_size, psgld_decay, psgld_eps,
            out_dir, epsilons, taus
        );
        if let Some(Pairs(s)) = a.shapes {
            cfg.shapes = Some(s);
        }
        if let Some(Pairs(t)) = a.temperatures {
            cfg.temperatures = t;
        }
        if a.k_iters.is_some() {
            cfg.k_iters = a.k_iters;
        }
        if a.bound_samples.is_some() {
            cfg.bound_samples = a.bound_samples;
        }
        if a.hyperprior_mean.is_some() {
            cfg.hyperprior_mean = a.hyperprior_mean;
        }
        if a.hyperprior_std.is_some() {
            cfg.hyperprior_std = a.hyperprior_std;
        }
        if a.name.is_some() {
            cfg.name = a.name;
        }
        cfg.t2_max |= a.t2_max;
        cfg.allow_invalid_bound |= a.allow_invalid_bound;
        cfg.raw |= a.raw;
        cfg.union_bound_delta |= a.union_bound_delta;
        Ok(cfg)
    }
}

fn run(args: ConfigArgs) -> Result<ExitCode> {
    let cfg = args.resolve()?;
    let (result, files) = run_to_dir(&cfg)?;
    let last = result.final_row();
    println!(
        "{}: task {} avg_reward {:.4} ± {:.4}, bound {:.4} ± {:.4}",
        cfg.label(),
        last.task_index,
        last.mean_avg_reward,
        last.std_avg_reward,
        last.mean_bound,
        last.std_bound
    );
    println!("wrote {}", files.csv.display());
    if let Some(raw) = files.raw {
        println!("wrote {}", raw.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: ConfigArgs) -> Result<ExitCode> {
    let cfg = args.resolve()?;
    let outcome = run_sweep(&cfg)?;
    print!("{}", outcome.table());
    println!("wrote {}", outcome.summary.display());
    let failed = outcome.failures();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed", outcome.cells.len());
        return Ok(ExitCode::from(PARTIAL_SWEEP_EXIT as u8));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Plot { csvs, out_dir } => plot_csvs(&csvs, &out_dir).map(|paths| {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e: Error| {
        eprintln!("error: {e}");
        ExitCode::from(exit_code(&e) as u8)
    })
}
