//! PAC-Bayes VI: a diagonal Gaussian hyperposterior over prior weights,
//! fitted by Adam ascent on a reparameterized Monte Carlo estimate of the
//! lower bound.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::{lower_bound, BoundConfig, BoundInputs};
use crate::environments::BetaBernoulliEnv;
use crate::error::{Error, Result};
use crate::lifelong::{check_env, collect_task, BehaviourRule, RunRecord};
use crate::math::{kl_gaussian_diag, kl_gaussian_diag_grad, softmax, GaussianDiag, WeightVector};
use crate::objective::{check_tasks, multitask_terms, term, term_with_grad, Scratch, TaskSummary};
use crate::par::{map_range, Execution};
use crate::seed::RunSeed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Hyperposterior parameters plus Adam moments over the flattened
/// `(mean, log_std)` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ViState {
    pub theta: GaussianDiag,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step_count: u64,
}

impl ViState {
    pub fn new(theta: GaussianDiag) -> Self {
        let len = 2 * theta.dim();
        Self {
            theta,
            adam_m: vec![0.0; len],
            adam_v: vec![0.0; len],
            step_count: 0,
        }
    }
}

/// Gradient with respect to the hyperposterior's mean and log std.
#[derive(Debug, Clone, PartialEq)]
pub struct ViGradient {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl ViGradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.mean.iter().chain(&self.log_std).copied().collect()
    }
}

/// One Adam ascent step (parameters move along `+grad`).
pub fn adam_step(state: &ViState, grad: &[f64], cfg: &AdamConfig) -> Result<ViState> {
    let k = state.theta.dim();
    if grad.len() != 2 * k || state.adam_m.len() != 2 * k || state.adam_v.len() != 2 * k {
        return Err(Error::invalid(format!(
            "Adam expects {} gradient entries, got {} (moments {} / {})",
            2 * k,
            grad.len(),
            state.adam_m.len(),
            state.adam_v.len()
        )));
    }
    if let Some(g) = grad.iter().find(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("non-finite gradient entry {g}")));
    }
    let t = state.step_count + 1;
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    let mut next = state.clone();
    next.step_count = t;
    for i in 0..2 * k {
        let m = cfg.beta1 * state.adam_m[i] + (1.0 - cfg.beta1) * grad[i];
        let v = cfg.beta2 * state.adam_v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        next.adam_m[i] = m;
        next.adam_v[i] = v;
        let update = cfg.lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
        if i < k {
            next.theta.mean[i] += update;
        } else {
            next.theta.log_std[i - k] += update;
        }
    }
    Ok(next)
}

/// Standard-normal draws `ζ_ij`, one `K`-vector per (task, step), laid out
/// task-major.
pub fn sample_noise<R: Rng + ?Sized>(n_tasks: usize, m: usize, k: usize, rng: &mut R) -> Vec<f64> {
    (0..n_tasks * m * k).map(|_| rng.sample(StandardNormal)).collect()
}

fn check_inputs(
    theta: &GaussianDiag,
    tasks: &[TaskSummary],
    hyperprior: &GaussianDiag,
    cfg: &BoundConfig,
    noise: &[f64],
) -> Result<()> {
    cfg.validate_objective()?;
    check_tasks(tasks, cfg.k, cfg.m)?;
    if theta.dim() != cfg.k || hyperprior.dim() != cfg.k {
        return Err(Error::invalid(format!(
            "hyperposterior/hyperprior dimensions {} / {} do not match K = {}",
            theta.dim(),
            hyperprior.dim(),
            cfg.k
        )));
    }
    let expected = tasks.len() * cfg.m * cfg.k;
    if noise.len() != expected {
        return Err(Error::invalid(format!(
            "expected {expected} noise values (n·m·K), got {}",
            noise.len()
        )));
    }
    Ok(())
}

/// Coefficients with `n` taken as the number of tasks seen.
fn objective_cfg(cfg: &BoundConfig, tasks: &[TaskSummary]) -> BoundConfig {
    cfg.with_n(tasks.len())
}

/// The VI objective with one reparameterized prior `w_ij = μ + σ⊙ζ_ij` per
/// term. `cfg.n` is ignored in favour of `tasks.len()`.
pub fn l_vi(
    theta: &GaussianDiag,
    tasks: &[TaskSummary],
    hyperprior: &GaussianDiag,
    cfg: &BoundConfig,
    noise: &[f64],
) -> Result<f64> {
    check_inputs(theta, tasks, hyperprior, cfg, noise)?;
    let cfg = objective_cfg(cfg, tasks);
    let (k, m) = (cfg.k, cfg.m);
    let mut s = Scratch::new(k);
    let (mut reward, mut kl) = (0.0, 0.0);
    for (i, t) in tasks.iter().enumerate() {
        for j in 0..m {
            let off = (i * m + j) * k;
            let w = theta.reparameterize(&noise[off..off + k]);
            let (r, d) = term(&w, t.prefix(j), t.est(), &mut s);
            reward += r;
            kl += d;
        }
    }
    let nm = (tasks.len() * m) as f64;
    Ok(reward / nm - cfg.task_kl_coef() * kl - cfg.hyper_kl_coef() * kl_gaussian_diag(theta, hyperprior)?)
}

/// Exact pathwise gradient of [`l_vi`] with the noise held fixed.
pub fn l_vi_gradient(
    theta: &GaussianDiag,
    tasks: &[TaskSummary],
    hyperprior: &GaussianDiag,
    cfg: &BoundConfig,
    noise: &[f64],
) -> Result<ViGradient> {
    l_vi_with_gradient(theta, tasks, hyperprior, cfg, noise, Execution::Sequential).map(|(_, g)| g)
}

/// Value and gradient of [`l_vi`] in one pass; tasks are evaluated under
/// `exec` and reduced in task order.
pub fn l_vi_with_gradient(
    theta: &GaussianDiag,
    tasks: &[TaskSummary],
    hyperprior: &GaussianDiag,
    cfg: &BoundConfig,
    noise: &[f64],
    exec: Execution,
) -> Result<(f64, ViGradient)> {
    check_inputs(theta, tasks, hyperprior, cfg, noise)?;
    let cfg = objective_cfg(cfg, tasks);
    let (k, m) = (cfg.k, cfg.m);
    let reward_coef = 1.0 / (tasks.len() * m) as f64;
    let kl_coef = cfg.task_kl_coef();
    let sigma = theta.std();
    let parts = map_range(exec, tasks.len(), |i| {
        let t = &tasks[i];
        let mut s = Scratch::new(k);
        let mut w = vec![0.0; k];
        let mut g = vec![0.0; k];
        let mut d_mean = vec![0.0; k];
        let mut d_log_std = vec![0.0; k];
        let (mut reward, mut kl) = (0.0, 0.0);
        for j in 0..m {
            let z = &noise[(i * m + j) * k..(i * m + j + 1) * k];
            for a in 0..k {
                w[a] = theta.mean[a] + sigma[a] * z[a];
            }
            let (r, d) = term_with_grad(&w, t.prefix(j), t.est(), reward_coef, kl_coef, &mut s, &mut g);
            reward += r;
            kl += d;
            for a in 0..k {
                d_mean[a] += g[a];
                d_log_std[a] += g[a] * sigma[a] * z[a];
            }
        }
        (reward, kl, d_mean, d_log_std)
    });
    let hyper_coef = cfg.hyper_kl_coef();
    let (kl_mean, kl_log_std) = kl_gaussian_diag_grad(theta, hyperprior);
    let mut grad = ViGradient {
        mean: kl_mean.iter().map(|d| -hyper_coef * d).collect(),
        log_std: kl_log_std.iter().map(|d| -hyper_coef * d).collect(),
    };
    let (mut reward, mut kl) = (0.0, 0.0);
    for (r, d, dm, dl) in parts {
        reward += r;
        kl += d;
        for a in 0..k {
            grad.mean[a] += dm[a];
            grad.log_std[a] += dl[a];
        }
    }
    let value = reward * reward_coef - kl_coef * kl - hyper_coef * kl_gaussian_diag(theta, hyperprior)?;
    Ok((value, grad))
}

/// A bound value with the quantities that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEstimate {
    /// NaN when the configuration does not admit a valid bound.
    pub value: f64,
    pub kl_hyper: f64,
    pub expected_task_kl_sum: f64,
    pub empirical_multitask_reward: f64,
}

/// Bound for the Gaussian hyperposterior `theta`; the expectations over
/// `P ∼ 𝒬_θ` are Monte Carlo averages over `samples` shared draws.
pub fn vi_bound<R: Rng + ?Sized>(
    theta: &GaussianDiag,
    tasks: &[TaskSummary],
    hyperprior: &GaussianDiag,
    cfg: &BoundConfig,
    samples: usize,
    exec: Execution,
    rng: &mut R,
) -> Result<BoundEstimate> {
    if samples == 0 {
        return Err(Error::invalid("at least one Monte Carlo sample is required"));
    }
    check_tasks(tasks, cfg.k, cfg.m)?;
    let cfg = objective_cfg(cfg, tasks);
    let ws: Vec<WeightVector> = (0..samples).map(|_| theta.sample(rng)).collect();
    let terms: Vec<(f64, f64)> = crate::par::map_ordered(exec, &ws, |w| multitask_terms(tasks, w.as_slice()));
    let (mut reward, mut kl) = (0.0, 0.0);
    for (r, d) in terms {
        reward += r;
        kl += d;
    }
    let inputs = BoundInputs {
        empirical_multitask_reward: reward / samples as f64,
        kl_hyper: kl_gaussian_diag(theta, hyperprior)?,
        expected_task_kl_sum: kl / samples as f64,
    };
    Ok(BoundEstimate {
        value: bound_or_nan(&inputs, &cfg)?,
        kl_hyper: inputs.kl_hyper,
        expected_task_kl_sum: inputs.expected_task_kl_sum,
        empirical_multitask_reward: inputs.empirical_multitask_reward,
    })
}

pub(crate) fn bound_or_nan(inputs: &BoundInputs, cfg: &BoundConfig) -> Result<f64> {
    match lower_bound(inputs, cfg) {
        Ok(v) => Ok(v),
        Err(Error::ConstraintViolation(_)) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViOptions {
    /// Adam steps after each task.
    pub k_iters: usize,
    pub adam: AdamConfig,
    /// Hyperposterior draws used to evaluate the recorded bound.
    pub bound_samples: usize,
    pub exec: Execution,
}

impl Default for ViOptions {
    fn default() -> Self {
        Self {
            k_iters: 50,
            adam: AdamConfig::default(),
            bound_samples: 16,
            exec: Execution::default(),
        }
    }
}

/// Runs PAC-Bayes VI for `cfg.n` tasks of length `cfg.m`.
///
/// Task `i` draws its parameters, rewards and learner noise from the
/// streams of `seed.task_streams(i)`.
pub fn vi_lifelong_run(
    env: &BetaBernoulliEnv,
    hyperprior: &GaussianDiag,
    cfg: &BoundConfig,
    opts: &ViOptions,
    seed: &RunSeed,
) -> Result<Vec<RunRecord>> {
    cfg.validate_objective()?;
    check_env(env, cfg)?;
    if hyperprior.dim() != cfg.k {
        return Err(Error::invalid(format!(
            "hyperprior has dimension {} but K = {}",
            hyperprior.dim(),
            cfg.k
        )));
    }
    let rule = BehaviourRule::for_bound(cfg);
    let mut state = ViState::new(hyperprior.clone());
    let mut tasks: Vec<TaskSummary> = Vec::with_capacity(cfg.n);
    let mut records = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let start = Instant::now();
        let mut streams = seed.task_streams(i as u64);
        let task = env.sample_task(&mut streams.env);
        let prior = softmax(&state.theta.sample(&mut streams.learner))?;
        let outcome = collect_task(&task, &prior, cfg.m, cfg.exponent, rule, &mut streams.interaction)?;
        tasks.push(TaskSummary::with_exponent(&outcome.dataset, cfg.estimator(), cfg.m, cfg.exponent)?);
        for _ in 0..opts.k_iters {
            let noise = sample_noise(tasks.len(), cfg.m, cfg.k, &mut streams.learner);
            let (_, grad) = l_vi_with_gradient(&state.theta, &tasks, hyperprior, cfg, &noise, opts.exec)?;
            state = adam_step(&state, &grad.flatten(), &opts.adam)?;
        }
        let bound = vi_bound(
            &state.theta,
            &tasks,
            hyperprior,
            cfg,
            opts.bound_samples,
            opts.exec,
            &mut streams.learner,
        )?;
        let total = outcome.dataset.total_reward();
        records.push(RunRecord {
            task_index: i + 1,
            avg_reward: total / cfg.m as f64,
            total_reward: total,
            bound_value: bound.value,
            kl_hyper: bound.kl_hyper,
            expected_task_kl_sum: bound.expected_task_kl_sum,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}
