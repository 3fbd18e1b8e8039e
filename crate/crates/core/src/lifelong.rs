//! Pieces shared by every lifelong learner: the within-task interaction loop
//! and the per-task record.

use rand::Rng;

use crate::base_learner::{posterior_with, RewardExponent};
use crate::bounds::{BoundConfig, BoundKind};
use crate::environments::{BetaBernoulliEnv, Task};
use crate::error::{Error, Result};
use crate::estimators::{Step, SufficientStats, TaskDataset};
use crate::math::{epsilon_soft, ActionDistribution};

/// How actions are drawn from the current task posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BehaviourRule {
    /// Sample straight from the posterior.
    Posterior,
    /// Sample from `(1 − ε)·posterior + ε·uniform`.
    EpsilonSoft(f64),
}

impl BehaviourRule {
    /// The Bernstein bound needs the ε-soft floor; the clipping bound does not.
    pub fn for_bound(cfg: &BoundConfig) -> Self {
        match cfg.kind {
            BoundKind::Bernstein => BehaviourRule::EpsilonSoft(cfg.epsilon),
            BoundKind::Clipping => BehaviourRule::Posterior,
        }
    }

    pub fn policy(&self, q: &ActionDistribution) -> Result<ActionDistribution> {
        match *self {
            BehaviourRule::Posterior => Ok(q.clone()),
            BehaviourRule::EpsilonSoft(eps) => epsilon_soft(q, eps),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub dataset: TaskDataset,
    pub final_posterior: ActionDistribution,
}

/// Plays `horizon` rounds of `task`: act from the behaviour policy, observe
/// the reward, refit the posterior from `prior`.
pub fn collect_task<R: Rng + ?Sized>(
    task: &Task,
    prior: &ActionDistribution,
    horizon: usize,
    form: RewardExponent,
    rule: BehaviourRule,
    rng: &mut R,
) -> Result<TaskOutcome> {
    let k = prior.num_actions();
    if task.num_actions() != k {
        return Err(Error::invalid(format!(
            "task has {} actions but the prior has {k}",
            task.num_actions()
        )));
    }
    let mut dataset = TaskDataset::new(k);
    let mut stats = SufficientStats::new(k);
    let mut q = prior.clone();
    for _ in 0..horizon {
        let b = rule.policy(&q)?;
        let action = b.sample(rng);
        let reward = task.sample_reward(action, rng)?;
        dataset.push(Step {
            action,
            reward,
            behaviour_prob: b.prob(action),
        })?;
        stats.record(action, reward);
        q = posterior_with(&stats, prior, horizon, form)?;
    }
    Ok(TaskOutcome {
        dataset,
        final_posterior: q,
    })
}

/// Outcome of one task of one lifelong run.
///
/// Baselines have no hyperposterior, so their `bound_value` is NaN and their
/// KL fields are 0. Learners also report NaN when the configuration does not
/// admit a valid bound (Bernstein with `λ2 > m·ε/K`).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// 1-based.
    pub task_index: usize,
    /// Mean of the `m` observed rewards.
    pub avg_reward: f64,
    pub total_reward: f64,
    pub bound_value: f64,
    pub kl_hyper: f64,
    pub expected_task_kl_sum: f64,
    pub wall_seconds: f64,
}

pub(crate) fn check_env(env: &BetaBernoulliEnv, cfg: &BoundConfig) -> Result<()> {
    if env.num_actions() != cfg.k {
        return Err(Error::invalid(format!(
            "environment has {} actions but the configuration says K = {}",
            env.num_actions(),
            cfg.k
        )));
    }
    Ok(())
}
