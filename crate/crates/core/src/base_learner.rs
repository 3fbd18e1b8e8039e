//! The closed-form KL-regularized base learner.
//!
//! Given a prior `P` over actions and the data observed so far in a task, the
//! learner returns
//!
//! ```text
//! Q(a) ∝ P(a) · exp( √m / (K |I_a|) · Σ_{j ∈ I_a} r_j )
//! ```
//!
//! which maximizes `Σ_a Q(a) · mean_reward(a) − (K / √m) · KL(Q || P)`.
//! Actions that have not been observed get exponent 0, so their mass stays
//! proportional to the prior.
//!
//! [`RewardExponent::Sum`] swaps the per-action mean for the per-action
//! reward total, `Q(a) ∝ P(a) · exp(√m / K · Σ_{j ∈ I_a} r_j)`, i.e. the
//! maximizer of `Σ_a Q(a) · total_reward(a) − (K / √m) · KL(Q || P)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{SufficientStats, TaskDataset};
use crate::math::{kl_discrete, ActionDistribution};

/// Which per-action reward statistic enters the exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardExponent {
    /// `√m / (K |I_a|) · Σ r`.
    #[default]
    Mean,
    /// `√m / K · Σ r`.
    Sum,
}

impl std::str::FromStr for RewardExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(RewardExponent::Mean),
            "sum" => Ok(RewardExponent::Sum),
            other => Err(Error::invalid(format!("unknown reward exponent '{other}' (expected mean or sum)"))),
        }
    }
}

impl std::fmt::Display for RewardExponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RewardExponent::Mean => "mean",
            RewardExponent::Sum => "sum",
        })
    }
}

/// Per-action exponents `√m / (K |I_a|) · Σ r`, with 0 for unobserved actions.
/// `horizon` is the task length `m`, not the number of steps seen so far.
pub fn posterior_exponents(stats: &SufficientStats, horizon: usize) -> Vec<f64> {
    let mut out = vec![0.0; stats.num_actions()];
    posterior_exponents_into(stats, horizon, RewardExponent::Mean, &mut out);
    out
}

pub(crate) fn posterior_exponents_into(
    stats: &SufficientStats,
    horizon: usize,
    form: RewardExponent,
    out: &mut [f64],
) {
    let scale = (horizon as f64).sqrt() / stats.num_actions() as f64;
    for ((o, &c), &s) in out.iter_mut().zip(stats.counts()).zip(stats.reward_sums()) {
        *o = match (c, form) {
            (0, _) => 0.0,
            (_, RewardExponent::Mean) => scale * s / c as f64,
            (_, RewardExponent::Sum) => scale * s,
        };
    }
}

/// Posterior of the base learner; zero prior mass stays zero.
pub fn posterior(
    stats: &SufficientStats,
    prior: &ActionDistribution,
    horizon: usize,
) -> Result<ActionDistribution> {
    posterior_with(stats, prior, horizon, RewardExponent::Mean)
}

/// [`posterior`] with a choice of exponent.
pub fn posterior_with(
    stats: &SufficientStats,
    prior: &ActionDistribution,
    horizon: usize,
    form: RewardExponent,
) -> Result<ActionDistribution> {
    if stats.num_actions() != prior.num_actions() {
        return Err(Error::invalid(format!(
            "statistics cover {} actions but the prior has {}",
            stats.num_actions(),
            prior.num_actions()
        )));
    }
    if horizon == 0 {
        return Err(Error::invalid("task horizon must be at least 1"));
    }
    let mut exps = vec![0.0; stats.num_actions()];
    posterior_exponents_into(stats, horizon, form, &mut exps);
    let shift = exps
        .iter()
        .zip(prior.probs())
        .filter(|(_, p)| **p > 0.0)
        .map(|(e, _)| *e)
        .fold(f64::NEG_INFINITY, f64::max);
    let masses = exps
        .iter()
        .zip(prior.probs())
        .map(|(e, p)| if *p > 0.0 { p * (e - shift).exp() } else { 0.0 })
        .collect();
    ActionDistribution::from_unnormalized(masses)
}

/// Posteriors after each prefix of `d`: element `j` uses the first `j`
/// steps, so element 0 is the prior and element `m` uses the whole dataset.
pub fn posterior_sequence(
    d: &TaskDataset,
    prior: &ActionDistribution,
    horizon: usize,
) -> Result<Vec<ActionDistribution>> {
    if d.len() != horizon {
        return Err(Error::invalid(format!(
            "dataset has {} steps but the horizon is {horizon}",
            d.len()
        )));
    }
    let mut stats = SufficientStats::new(d.num_actions());
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(posterior(&stats, prior, horizon)?);
    for s in d.steps() {
        stats.record(s.action, s.reward);
        out.push(posterior(&stats, prior, horizon)?);
    }
    Ok(out)
}

/// `Σ_a q(a) · mean_reward(a) − (K / √m) · KL(q || prior)`, the objective the
/// closed-form posterior maximizes. Errors with `DivergenceInfinite` when `q`
/// puts mass where the prior has none (the objective is −∞ there).
pub fn objective_value(
    q: &ActionDistribution,
    stats: &SufficientStats,
    prior: &ActionDistribution,
    horizon: usize,
) -> Result<f64> {
    let k = prior.num_actions() as f64;
    let means = stats.mean_rewards();
    let reward: f64 = q.probs().iter().zip(&means).map(|(q, r)| q * r).sum();
    Ok(reward - k / (horizon as f64).sqrt() * kl_discrete(q, prior)?)
}
