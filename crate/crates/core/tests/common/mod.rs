//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use lifelong_bandit::estimators::{EstimatorKind, Step, TaskDataset};
use lifelong_bandit::objective::TaskSummary;
use rand::Rng;

/// Every `(action, reward)` sequence of length `m` for two actions with a
/// fixed behaviour policy `b`, together with its probability.
pub fn enumerate_sequences(p: [f64; 2], b: [f64; 2], m: usize) -> Vec<(Vec<Step>, f64)> {
    let outcomes: Vec<(usize, f64, f64)> = (0..2)
        .flat_map(|a| {
            [(a, 1.0, b[a] * p[a]), (a, 0.0, b[a] * (1.0 - p[a]))]
        })
        .collect();
    let mut seqs: Vec<(Vec<Step>, f64)> = vec![(Vec::new(), 1.0)];
    for _ in 0..m {
        let mut next = Vec::with_capacity(seqs.len() * 4);
        for (steps, prob) in &seqs {
            for &(action, reward, pr) in &outcomes {
                let mut s = steps.clone();
                s.push(Step {
                    action,
                    reward,
                    behaviour_prob: b[action],
                });
                next.push((s, prob * pr));
            }
        }
        seqs = next;
    }
    seqs
}

/// `E[clipped estimate of a] = p[a]·b[a]·min(1/b[a], 1 + τ)`.
pub fn clipped_expectation(p: f64, b: f64, tau: f64) -> f64 {
    p * b * (1.0 / b).min(1.0 + tau)
}

/// `Σ_a q(a)·mean(a) − (K/√m)·KL(q‖prior)` evaluated from scratch.
pub fn base_objective(q: &[f64], means: &[f64], prior: &[f64], m: usize) -> f64 {
    let k = q.len() as f64;
    let mut reward = 0.0;
    let mut kl = 0.0;
    for a in 0..q.len() {
        reward += q[a] * means[a];
        if q[a] > 0.0 {
            if prior[a] == 0.0 {
                return f64::NEG_INFINITY;
            }
            kl += q[a] * (q[a] / prior[a]).ln();
        }
    }
    reward - k / (m as f64).sqrt() * kl
}

/// A random dataset of length `m` logged under random behaviour policies.
pub fn random_dataset<R: Rng>(rng: &mut R, m: usize, k: usize) -> TaskDataset {
    let steps = (0..m)
        .map(|_| {
            let mut b: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = b.iter().sum();
            b.iter_mut().for_each(|x| *x /= total);
            let action = rng.random_range(0..k);
            Step {
                action,
                reward: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
                behaviour_prob: b[action],
            }
        })
        .collect();
    TaskDataset::from_steps(k, steps).unwrap()
}

pub fn random_summaries<R: Rng>(rng: &mut R, n: usize, m: usize, k: usize, est: EstimatorKind) -> Vec<TaskSummary> {
    (0..n)
        .map(|_| TaskSummary::new(&random_dataset(rng, m, k), est, m).unwrap())
        .collect()
}

/// Central differences of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += h;
            minus[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-12)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

/// Maximizes `Σ q·φ − KL(q‖p)` over the probability simplex by
/// equality-constrained Newton iterations with a positivity line search.
/// Returns the optimal value and maximizer.
pub fn maximize_gibbs_objective(p: &[f64], phi: &[f64]) -> (f64, Vec<f64>) {
    let k = p.len();
    let objective = |q: &[f64]| -> f64 {
        (0..k)
            .map(|a| q[a] * phi[a] - if q[a] > 0.0 { q[a] * (q[a] / p[a]).ln() } else { 0.0 })
            .sum()
    };
    let mut q = vec![1.0 / k as f64; k];
    for _ in 0..200 {
        // Gradient g_a = φ_a − ln(q_a/p_a) − 1, Hessian −diag(1/q_a).
        let g: Vec<f64> = (0..k).map(|a| phi[a] - (q[a] / p[a]).ln() - 1.0).collect();
        // Newton direction within Σ d = 0: d_a = q_a·(g_a − ν), ν = Σ q g / Σ q.
        let qs: f64 = q.iter().sum();
        let nu = q.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>() / qs;
        let d: Vec<f64> = (0..k).map(|a| q[a] * (g[a] - nu)).collect();
        let decrement: f64 = (0..k).map(|a| d[a] * d[a] / q[a]).sum();
        if decrement < 1e-30 {
            break;
        }
        let f0 = objective(&q);
        let slope: f64 = (0..k).map(|a| g[a] * d[a]).sum();
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = (0..k).map(|a| q[a] + t * d[a]).collect();
            if cand.iter().all(|x| *x > 0.0) && objective(&cand) >= f0 + 0.25 * t * slope {
                q = cand;
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                return (objective(&q), q);
            }
        }
    }
    (objective(&q), q)
}
