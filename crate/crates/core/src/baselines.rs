//! Baselines without a hyperposterior.
//!
//! * Learning From Scratch (LFS) starts every task from the uniform prior.
//! * Adaptive Ridge Regression (ARR) starts task `i + 1` from the average of
//!   the final posteriors of tasks `1..=i` (the name comes from earlier work;
//!   the mechanism here is only the posterior average).
//!
//! Both use the behaviour rule implied by `cfg` (ε-soft for Bernstein,
//! plain posterior for clipping) and the same per-task random streams as the
//! learners, so a baseline and a learner with one seed see the same tasks.

use std::time::Instant;

use crate::bounds::BoundConfig;
use crate::environments::BetaBernoulliEnv;
use crate::error::Result;
use crate::lifelong::{check_env, collect_task, BehaviourRule, RunRecord, TaskOutcome};
use crate::math::ActionDistribution;
use crate::seed::RunSeed;

/// Running average of distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorAverage {
    sum: Vec<f64>,
    count: usize,
}

impl PosteriorAverage {
    pub fn new(k: usize) -> Self {
        Self {
            sum: vec![0.0; k],
            count: 0,
        }
    }

    pub fn add(&mut self, q: &ActionDistribution) {
        for (s, p) in self.sum.iter_mut().zip(q.probs()) {
            *s += p;
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// The average so far, or uniform before anything was added.
    pub fn current(&self) -> Result<ActionDistribution> {
        if self.count == 0 {
            return ActionDistribution::uniform(self.sum.len());
        }
        ActionDistribution::from_unnormalized(self.sum.iter().map(|s| s / self.count as f64).collect())
    }
}

fn record(i: usize, outcome: &TaskOutcome, m: usize, start: Instant) -> RunRecord {
    let total = outcome.dataset.total_reward();
    RunRecord {
        task_index: i + 1,
        avg_reward: total / m as f64,
        total_reward: total,
        bound_value: f64::NAN,
        kl_hyper: 0.0,
        expected_task_kl_sum: 0.0,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

fn run_with_priors<F>(env: &BetaBernoulliEnv, cfg: &BoundConfig, seed: &RunSeed, mut next_prior: F) -> Result<Vec<RunRecord>>
where
    F: FnMut(Option<&TaskOutcome>) -> Result<ActionDistribution>,
{
    cfg.validate_objective()?;
    check_env(env, cfg)?;
    let rule = BehaviourRule::for_bound(cfg);
    let mut records = Vec::with_capacity(cfg.n);
    let mut last: Option<TaskOutcome> = None;
    for i in 0..cfg.n {
        let start = Instant::now();
        let prior = next_prior(last.as_ref())?;
        let mut streams = seed.task_streams(i as u64);
        let task = env.sample_task(&mut streams.env);
        let outcome = collect_task(&task, &prior, cfg.m, cfg.exponent, rule, &mut streams.interaction)?;
        records.push(record(i, &outcome, cfg.m, start));
        last = Some(outcome);
    }
    Ok(records)
}

pub fn lfs_run(env: &BetaBernoulliEnv, cfg: &BoundConfig, seed: &RunSeed) -> Result<Vec<RunRecord>> {
    let k = cfg.k;
    run_with_priors(env, cfg, seed, |_| ActionDistribution::uniform(k))
}

pub fn arr_run(env: &BetaBernoulliEnv, cfg: &BoundConfig, seed: &RunSeed) -> Result<Vec<RunRecord>> {
    let mut avg = PosteriorAverage::new(cfg.k);
    run_with_priors(env, cfg, seed, |last| {
        if let Some(o) = last {
            avg.add(&o.final_posterior);
        }
        avg.current()
    })
}

/// ARR priors for tasks `1..=n`, exposed for inspection.
pub fn arr_priors(env: &BetaBernoulliEnv, cfg: &BoundConfig, seed: &RunSeed) -> Result<Vec<(ActionDistribution, ActionDistribution)>> {
    cfg.validate_objective()?;
    check_env(env, cfg)?;
    let rule = BehaviourRule::for_bound(cfg);
    let mut avg = PosteriorAverage::new(cfg.k);
    let mut out = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let prior = avg.current()?;
        let mut streams = seed.task_streams(i as u64);
        let task = env.sample_task(&mut streams.env);
        let outcome = collect_task(&task, &prior, cfg.m, cfg.exponent, rule, &mut streams.interaction)?;
        avg.add(&outcome.final_posterior);
        out.push((prior, outcome.final_posterior));
    }
    Ok(out)
}
