//! Per-task cached quantities and the prefix-sum terms shared by the VI
//! objective and the Gibbs potential.
//!
//! For a prior `P_w = softmax(w)` and a prefix posterior
//! `Q = softmax(w + e)` (where `e` are the base-learner exponents of the
//! prefix), one term contributes
//!
//! ```text
//! reward = Σ_a Q(a) est(a)
//! kl     = KL(Q ‖ P_w) = Q·e − lse(w + e) + lse(w)
//! ∂reward/∂w = Q ⊙ (est − reward)
//! ∂kl/∂w     = Q ⊙ (e − Q·e) − Q + P_w
//! ```

use crate::base_learner::{posterior_exponents_into, RewardExponent};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, SufficientStats, TaskDataset};
use crate::math::softmax_into;

/// What the learners keep about a finished task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSummary {
    est: Vec<f64>,
    prefix_stats: Vec<SufficientStats>,
    /// Row `j` (length `K`) holds the exponents after the first `j` steps,
    /// for `j = 0..m`.
    prefix_exponents: Vec<f64>,
    /// `exp(e − max e)` for each row, and the row maxima.
    prefix_exp: Vec<f64>,
    prefix_max: Vec<f64>,
    horizon: usize,
    num_actions: usize,
}

impl TaskSummary {
    pub fn new(d: &TaskDataset, estimator: EstimatorKind, horizon: usize) -> Result<Self> {
        Self::with_exponent(d, estimator, horizon, RewardExponent::Mean)
    }

    pub fn with_exponent(
        d: &TaskDataset,
        estimator: EstimatorKind,
        horizon: usize,
        form: RewardExponent,
    ) -> Result<Self> {
        if d.len() != horizon {
            return Err(Error::invalid(format!(
                "dataset has {} steps but the horizon is {horizon}",
                d.len()
            )));
        }
        let k = d.num_actions();
        let est = estimator.estimate(d)?;
        let mut stats = SufficientStats::new(k);
        let mut prefix_stats = Vec::with_capacity(horizon);
        let mut prefix_exponents = vec![0.0; horizon * k];
        for (j, s) in d.steps().iter().enumerate() {
            posterior_exponents_into(&stats, horizon, form, &mut prefix_exponents[j * k..(j + 1) * k]);
            prefix_stats.push(stats.clone());
            stats.record(s.action, s.reward);
        }
        let mut prefix_exp = vec![0.0; horizon * k];
        let mut prefix_max = vec![0.0; horizon];
        for j in 0..horizon {
            let row = &prefix_exponents[j * k..(j + 1) * k];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prefix_max[j] = max;
            for (o, e) in prefix_exp[j * k..(j + 1) * k].iter_mut().zip(row) {
                *o = (e - max).exp();
            }
        }
        Ok(Self {
            est,
            prefix_stats,
            prefix_exponents,
            prefix_exp,
            prefix_max,
            horizon,
            num_actions: k,
        })
    }

    pub fn est(&self) -> &[f64] {
        &self.est
    }

    /// Statistics of the first `j` steps, `j = 0..m`.
    pub fn prefix_stats(&self) -> &[SufficientStats] {
        &self.prefix_stats
    }

    pub fn exponents(&self, j: usize) -> &[f64] {
        &self.prefix_exponents[j * self.num_actions..(j + 1) * self.num_actions]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub(crate) fn prefix(&self, j: usize) -> Prefix<'_> {
        let k = self.num_actions;
        Prefix {
            e: &self.prefix_exponents[j * k..(j + 1) * k],
            exp_e: &self.prefix_exp[j * k..(j + 1) * k],
            max_e: self.prefix_max[j],
        }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

pub(crate) fn check_tasks(tasks: &[TaskSummary], k: usize, m: usize) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::invalid("at least one task summary is required"));
    }
    for (i, t) in tasks.iter().enumerate() {
        if t.num_actions != k || t.horizon != m {
            return Err(Error::invalid(format!(
                "task {i} has K = {}, m = {} but K = {k}, m = {m} was expected",
                t.num_actions, t.horizon
            )));
        }
    }
    Ok(())
}

/// Exponents of one prefix with their shifted exponentials cached, so that
/// `Q ∝ P_w ⊙ exp(e)` costs no extra `exp` per term.
#[derive(Clone, Copy)]
pub(crate) struct Prefix<'a> {
    pub(crate) e: &'a [f64],
    pub(crate) exp_e: &'a [f64],
    pub(crate) max_e: f64,
}

impl<'a> Prefix<'a> {
    #[cfg(test)]
    pub(crate) fn from_exponents(e: &'a [f64], buf: &'a mut Vec<f64>) -> Self {
        let max_e = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        buf.clear();
        buf.extend(e.iter().map(|x| (x - max_e).exp()));
        Prefix { e, exp_e: buf, max_e }
    }
}

/// Reusable buffers for term evaluation.
pub(crate) struct Scratch {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            p: vec![0.0; k],
            q: vec![0.0; k],
        }
    }
}

/// Fills `s.q` with the posterior and returns `(reward, kl, Q·e)`; `s.p` must
/// already hold `softmax(w)`.
#[inline]
fn posterior_terms(pre: Prefix<'_>, est: &[f64], s: &mut Scratch) -> (f64, f64, f64) {
    let mut z = 0.0;
    for ((q, p), x) in s.q.iter_mut().zip(&s.p).zip(pre.exp_e) {
        *q = p * x;
        z += *q;
    }
    let inv = 1.0 / z;
    let mut reward = 0.0;
    let mut qe = 0.0;
    for ((q, est), e) in s.q.iter_mut().zip(est).zip(pre.e) {
        *q *= inv;
        reward += *q * est;
        qe += *q * e;
    }
    // KL(Q‖P) = Q·e − ln Σ_a P(a) exp(e_a)
    (reward, (qe - z.ln() - pre.max_e).max(0.0), qe)
}

/// Reward and KL of one prefix term.
#[inline]
pub(crate) fn term(w: &[f64], pre: Prefix<'_>, est: &[f64], s: &mut Scratch) -> (f64, f64) {
    softmax_into(w, &mut s.p);
    let (reward, kl, _) = posterior_terms(pre, est, s);
    (reward, kl)
}

/// Reward and KL of one prefix term; writes
/// `reward_coef · ∂reward/∂w − kl_coef · ∂kl/∂w` into `grad`.
#[inline]
pub(crate) fn term_with_grad(
    w: &[f64],
    pre: Prefix<'_>,
    est: &[f64],
    reward_coef: f64,
    kl_coef: f64,
    s: &mut Scratch,
    grad: &mut [f64],
) -> (f64, f64) {
    softmax_into(w, &mut s.p);
    let (reward, kl, qe) = posterior_terms(pre, est, s);
    for a in 0..w.len() {
        let q = s.q[a];
        let d_reward = q * (est[a] - reward);
        let d_kl = q * (pre.e[a] - qe) - q + s.p[a];
        grad[a] = reward_coef * d_reward - kl_coef * d_kl;
    }
    (reward, kl)
}

/// `(Σ_j reward_j, Σ_j KL_j)` over the `m` prefixes of one task with the
/// same prior weights for every prefix.
pub(crate) fn task_sums(task: &TaskSummary, w: &[f64], s: &mut Scratch) -> (f64, f64) {
    let mut reward = 0.0;
    let mut kl = 0.0;
    for j in 0..task.horizon {
        let (r, k) = term(w, task.prefix(j), &task.est, s);
        reward += r;
        kl += k;
    }
    (reward, kl)
}

/// Empirical multi-task reward and summed task KL for a single prior `w`:
/// `((1/(nm)) Σ_ij R̂_i(Q_ij), Σ_ij KL(Q_ij ‖ P_w))`.
pub fn multitask_terms(tasks: &[TaskSummary], w: &[f64]) -> (f64, f64) {
    let mut s = Scratch::new(w.len());
    let mut reward = 0.0;
    let mut kl = 0.0;
    let mut count = 0usize;
    for t in tasks {
        let (r, k) = task_sums(t, w, &mut s);
        reward += r;
        kl += k;
        count += t.horizon;
    }
    (reward / count.max(1) as f64, kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_learner::posterior;
    use crate::estimators::{iw_estimate_vector, Step};
    use crate::math::{kl_discrete, softmax, WeightVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(rng: &mut ChaCha8Rng, k: usize, m: usize) -> TaskDataset {
        let steps = (0..m)
            .map(|_| Step {
                action: rng.random_range(0..k),
                reward: if rng.random_bool(0.6) { 1.0 } else { 0.0 },
                behaviour_prob: rng.random_range(0.05..1.0),
            })
            .collect();
        TaskDataset::from_steps(k, steps).unwrap()
    }

    #[test]
    fn terms_match_direct_posterior_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let k = rng.random_range(2..7);
            let m = rng.random_range(1..10);
            let d = random_dataset(&mut rng, k, m);
            let summary = TaskSummary::new(&d, EstimatorKind::ImportanceWeighted, m).unwrap();
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let prior = softmax(&WeightVector::new(w.clone()).unwrap()).unwrap();
            let est = iw_estimate_vector(&d).unwrap();
            let mut s = Scratch::new(k);
            for j in 0..m {
                let prefix = TaskDataset::from_steps(k, d.steps()[..j].to_vec()).unwrap();
                let q = posterior(&prefix.stats(), &prior, m).unwrap();
                let reward: f64 = q.probs().iter().zip(&est).map(|(a, b)| a * b).sum();
                let kl = kl_discrete(&q, &prior).unwrap();
                let (r2, kl2) = term(&w, summary.prefix(j), summary.est(), &mut s);
                assert!((reward - r2).abs() < 1e-12);
                assert!((kl - kl2).abs() < 1e-12);
                let mut g = vec![0.0; k];
                let (r3, kl3) =
                    term_with_grad(&w, summary.prefix(j), summary.est(), 1.0, 1.0, &mut s, &mut g);
                assert_eq!((r2, kl2), (r3, kl3));
            }
        }
    }

    #[test]
    fn term_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = 5;
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let est: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..3.0)).collect();
        let mut s = Scratch::new(k);
        let mut g = vec![0.0; k];
        let mut buf = Vec::new();
        let pre = Prefix::from_exponents(&e, &mut buf);
        term_with_grad(&w, pre, &est, 0.7, 0.3, &mut s, &mut g);
        let h = 1e-6;
        for a in 0..k {
            let f = |delta: f64, s: &mut Scratch| {
                let mut wp = w.clone();
                wp[a] += delta;
                let (r, kl) = term(&wp, pre, &est, s);
                0.7 * r - 0.3 * kl
            };
            let fd = (f(h, &mut s) - f(-h, &mut s)) / (2.0 * h);
            assert!((fd - g[a]).abs() < 1e-8, "{fd} vs {}", g[a]);
        }
    }

    #[test]
    fn zero_exponents_give_zero_kl() {
        let d = TaskDataset::from_steps(
            3,
            vec![Step {
                action: 0,
                reward: 0.0,
                behaviour_prob: 0.5,
            }],
        )
        .unwrap();
        let t = TaskSummary::new(&d, EstimatorKind::ImportanceWeighted, 1).unwrap();
        let (r, kl) = multitask_terms(&[t], &[0.3, -0.2, 1.0]);
        assert_eq!(r, 0.0);
        assert!(kl.abs() < 1e-15);
    }
}
