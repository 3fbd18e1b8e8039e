//! Importance-weighted reward estimates computed from logged task data.

use crate::environments::Task;
use crate::error::{Error, Result};
use crate::math::ActionDistribution;

/// One logged interaction: the chosen action, its reward and the probability
/// the behaviour policy assigned to that action when it was chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub action: usize,
    pub reward: f64,
    pub behaviour_prob: f64,
}

/// The ordered interactions of a single task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    num_actions: usize,
    steps: Vec<Step>,
}

impl TaskDataset {
    pub fn new(num_actions: usize) -> Self {
        Self {
            num_actions,
            steps: Vec::new(),
        }
    }

    pub fn from_steps(num_actions: usize, steps: Vec<Step>) -> Result<Self> {
        let mut d = Self::new(num_actions);
        for s in steps {
            d.push(s)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, step: Step) -> Result<()> {
        if step.action >= self.num_actions {
            return Err(Error::invalid(format!(
                "action {} out of range for K = {}",
                step.action, self.num_actions
            )));
        }
        if !(step.behaviour_prob > 0.0 && step.behaviour_prob <= 1.0) {
            return Err(Error::invalid(format!(
                "behaviour probability must lie in (0, 1], got {}",
                step.behaviour_prob
            )));
        }
        if !(0.0..=1.0).contains(&step.reward) {
            return Err(Error::invalid(format!("reward must lie in [0, 1], got {}", step.reward)));
        }
        self.steps.push(step);
        Ok(())
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn stats(&self) -> SufficientStats {
        let mut stats = SufficientStats::new(self.num_actions);
        for s in &self.steps {
            stats.record(s.action, s.reward);
        }
        stats
    }
}

/// Per-action observation counts and reward sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    counts: Vec<u32>,
    reward_sums: Vec<f64>,
}

impl SufficientStats {
    pub fn new(num_actions: usize) -> Self {
        Self {
            counts: vec![0; num_actions],
            reward_sums: vec![0.0; num_actions],
        }
    }

    pub fn record(&mut self, action: usize, reward: f64) {
        self.counts[action] += 1;
        self.reward_sums[action] += reward;
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn reward_sums(&self) -> &[f64] {
        &self.reward_sums
    }

    pub fn num_actions(&self) -> usize {
        self.counts.len()
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().map(|c| *c as usize).sum()
    }

    /// Empirical mean reward per action; unobserved actions report 0.
    pub fn mean_rewards(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.reward_sums)
            .map(|(&c, &s)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect()
    }
}

/// Which reward estimate feeds the objectives and bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    ImportanceWeighted,
    Clipped { tau: f64 },
}

impl EstimatorKind {
    pub fn estimate(&self, d: &TaskDataset) -> Result<Vec<f64>> {
        match *self {
            EstimatorKind::ImportanceWeighted => iw_estimate_vector(d),
            EstimatorKind::Clipped { tau } => clipped_iw_estimate_vector(d, tau),
        }
    }
}

fn weighted_estimate(d: &TaskDataset, weight: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    if d.is_empty() {
        return Err(Error::invalid("reward estimates need a non-empty dataset"));
    }
    let m = d.len() as f64;
    let mut est = vec![0.0; d.num_actions()];
    for s in d.steps() {
        est[s.action] += weight(s.behaviour_prob) * s.reward;
    }
    est.iter_mut().for_each(|e| *e /= m);
    Ok(est)
}

/// `est[a] = (1/m) Σ_j r_j / b_j · 1{a_j = a}`.
pub fn iw_estimate_vector(d: &TaskDataset) -> Result<Vec<f64>> {
    weighted_estimate(d, |b| 1.0 / b)
}

/// Like [`iw_estimate_vector`] but with weights capped at `1 + tau`.
pub fn clipped_iw_estimate_vector(d: &TaskDataset, tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("clip level tau must be positive, got {tau}")));
    }
    weighted_estimate(d, |b| (1.0 / b).min(1.0 + tau))
}

/// `Σ_a q[a] est[a]`.
pub fn estimate_under_policy(est: &[f64], q: &ActionDistribution) -> Result<f64> {
    if est.len() != q.num_actions() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} estimates for {} actions",
            est.len(),
            q.num_actions()
        )));
    }
    Ok(est.iter().zip(q.probs()).map(|(e, p)| e * p).sum())
}

/// Expected reward of `q` on a task with known parameters.
pub fn true_reward(task: &Task, q: &ActionDistribution) -> Result<f64> {
    estimate_under_policy(task.probs(), q)
}
