//! PAC-Bayes MCMC: the hyperposterior that maximizes the bound is the Gibbs
//! distribution `𝒬(w) ∝ 𝒫(w)·exp(φ(w))`. A single preconditioned SGLD
//! chain tracks it across tasks, and the bound itself is estimated from
//! `ln E_{w∼𝒫}[exp φ(w)]`.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::{constant_terms, BoundConfig};
use crate::environments::BetaBernoulliEnv;
use crate::error::{Error, Result};
use crate::lifelong::{check_env, collect_task, BehaviourRule, RunRecord};
use crate::math::{log_sum_exp, softmax, GaussianDiag, WeightVector};
use crate::objective::{check_tasks, task_sums, term_with_grad, Scratch, TaskSummary};
use crate::par::{map_ordered, map_range, Execution};
use crate::seed::RunSeed;
use crate::vi::BoundEstimate;

/// `C = T1·T2·n·√(nm) / (T1·√n + T2·n·√m)`, the inverse of the
/// hyperposterior KL coefficient. Uses `cfg.n`.
pub fn gibbs_scale(cfg: &BoundConfig) -> f64 {
    1.0 / cfg.hyper_kl_coef()
}

/// `φ(w) = C·[(1/(nm)) Σ_ij R̂_i(Q_ij) − (1/(nmλ2)) Σ_ij KL(Q_ij ‖ P_w)]`
/// with `n = tasks.len()`.
pub fn phi(w: &WeightVector, tasks: &[TaskSummary], cfg: &BoundConfig) -> Result<f64> {
    phi_parts(w.as_slice(), tasks, cfg).map(|p| p.phi)
}

pub(crate) struct PhiParts {
    pub(crate) phi: f64,
    pub(crate) reward: f64,
    pub(crate) task_kl: f64,
}

pub(crate) fn phi_parts(w: &[f64], tasks: &[TaskSummary], cfg: &BoundConfig) -> Result<PhiParts> {
    check_tasks(tasks, cfg.k, cfg.m)?;
    if w.len() != cfg.k {
        return Err(Error::invalid(format!("weight vector has {} entries, K = {}", w.len(), cfg.k)));
    }
    let cfg = cfg.with_n(tasks.len());
    let mut s = Scratch::new(cfg.k);
    let (mut reward, mut kl) = (0.0, 0.0);
    for t in tasks {
        let (r, d) = task_sums(t, w, &mut s);
        reward += r;
        kl += d;
    }
    let reward = reward / (tasks.len() * cfg.m) as f64;
    Ok(PhiParts {
        phi: gibbs_scale(&cfg) * (reward - cfg.task_kl_coef() * kl),
        reward,
        task_kl: kl,
    })
}

/// `φ(w)` and `∇φ(w)`; tasks are evaluated under `exec` and reduced in order.
pub fn phi_with_gradient(
    w: &WeightVector,
    tasks: &[TaskSummary],
    cfg: &BoundConfig,
    exec: Execution,
) -> Result<(f64, Vec<f64>)> {
    check_tasks(tasks, cfg.k, cfg.m)?;
    let w = w.as_slice();
    if w.len() != cfg.k {
        return Err(Error::invalid(format!("weight vector has {} entries, K = {}", w.len(), cfg.k)));
    }
    let cfg = cfg.with_n(tasks.len());
    let (k, m) = (cfg.k, cfg.m);
    let c = gibbs_scale(&cfg);
    let reward_coef = c / (tasks.len() * m) as f64;
    let kl_coef = c * cfg.task_kl_coef();
    let parts = map_range(exec, tasks.len(), |i| {
        let t = &tasks[i];
        let mut s = Scratch::new(k);
        let mut g = vec![0.0; k];
        let mut acc = vec![0.0; k];
        let (mut reward, mut kl) = (0.0, 0.0);
        for j in 0..m {
            let (r, d) = term_with_grad(w, t.prefix(j), t.est(), reward_coef, kl_coef, &mut s, &mut g);
            reward += r;
            kl += d;
            for (a, g) in acc.iter_mut().zip(&g) {
                *a += g;
            }
        }
        (reward, kl, acc)
    });
    let mut grad = vec![0.0; k];
    let (mut reward, mut kl) = (0.0, 0.0);
    for (r, d, g) in parts {
        reward += r;
        kl += d;
        for (a, g) in grad.iter_mut().zip(&g) {
            *a += g;
        }
    }
    Ok((reward * reward_coef - kl * kl_coef, grad))
}

fn check_hyperprior(w: &[f64], hyperprior: &GaussianDiag) -> Result<()> {
    if w.len() != hyperprior.dim() {
        return Err(Error::invalid(format!(
            "weight vector has {} entries but the hyperprior has dimension {}",
            w.len(),
            hyperprior.dim()
        )));
    }
    Ok(())
}

/// `ln 𝒫(w) + φ(w)`; with no tasks `φ ≡ 0`.
pub fn log_gibbs_density_unnormalized(
    w: &WeightVector,
    hyperprior: &GaussianDiag,
    tasks: &[TaskSummary],
    cfg: &BoundConfig,
) -> Result<f64> {
    check_hyperprior(w.as_slice(), hyperprior)?;
    let phi = if tasks.is_empty() { 0.0 } else { phi(w, tasks, cfg)? };
    Ok(hyperprior.log_density(w.as_slice()) + phi)
}

/// Gradient of [`log_gibbs_density_unnormalized`] with respect to `w`.
pub fn grad_log_gibbs_density(
    w: &WeightVector,
    hyperprior: &GaussianDiag,
    tasks: &[TaskSummary],
    cfg: &BoundConfig,
    exec: Execution,
) -> Result<Vec<f64>> {
    check_hyperprior(w.as_slice(), hyperprior)?;
    let mut grad = hyperprior.grad_log_density(w.as_slice());
    if !tasks.is_empty() {
        let (_, g) = phi_with_gradient(w, tasks, cfg, exec)?;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsgldConfig {
    pub step_size: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for PsgldConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            decay: 0.99,
            eps: 1e-5,
        }
    }
}

/// One pSGLD step with the RMSProp diagonal preconditioner:
///
/// ```text
/// v' = decay·v + (1 − decay)·g²
/// G  = 1 / (√v' + eps)
/// w' = w + (h/2)·G⊙g + √(h·G)⊙ξ,   ξ ∼ N(0, I)
/// ```
///
/// The curvature correction `Γ(w)` is left out.
pub fn psgld_step<R: Rng + ?Sized>(
    w: &[f64],
    grad_log_density: &[f64],
    precond_state: &[f64],
    cfg: &PsgldConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if grad_log_density.len() != w.len() || precond_state.len() != w.len() {
        return Err(Error::invalid(format!(
            "pSGLD shapes differ: w {}, gradient {}, state {}",
            w.len(),
            grad_log_density.len(),
            precond_state.len()
        )));
    }
    if !(cfg.step_size > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {}", cfg.step_size)));
    }
    if let Some((i, g)) = grad_log_density.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite gradient {g} at coordinate {i} (w = {:?})",
            w
        )));
    }
    let mut next_w = Vec::with_capacity(w.len());
    let mut next_state = Vec::with_capacity(w.len());
    for ((x, g), v) in w.iter().zip(grad_log_density).zip(precond_state) {
        let v = cfg.decay * v + (1.0 - cfg.decay) * g * g;
        let precond = 1.0 / (v.sqrt() + cfg.eps);
        let xi: f64 = rng.sample(StandardNormal);
        next_w.push(x + 0.5 * cfg.step_size * precond * g + (cfg.step_size * precond).sqrt() * xi);
        next_state.push(v);
    }
    Ok((next_w, next_state))
}

/// Numerically stable `ln((1/K) Σ_k exp(x_k))`.
pub fn log_mean_exp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::invalid("log-mean-exp of an empty sample"));
    }
    Ok(log_sum_exp(xs) - (xs.len() as f64).ln())
}

/// Estimates the bound attained by the Gibbs hyperposterior from `n_samples`
/// fresh draws `w_k ∼ 𝒫`:
///
/// ```text
/// bound ≈ (1/C)·ln((1/K_s) Σ_k exp φ(w_k)) − constant penalties
/// ```
///
/// The reported KL fields are those of the self-normalized weights
/// `π_k ∝ exp φ(w_k)`, for which `E_π[φ]/C − KL(π‖uniform)/C` reproduces the
/// log-mean-exp term exactly.
pub fn mcmc_bound_estimate<R: Rng + ?Sized>(
    hyperprior: &GaussianDiag,
    tasks: &[TaskSummary],
    cfg: &BoundConfig,
    n_samples: usize,
    exec: Execution,
    rng: &mut R,
) -> Result<BoundEstimate> {
    if n_samples == 0 {
        return Err(Error::invalid("at least one hyperprior sample is required"));
    }
    check_tasks(tasks, cfg.k, cfg.m)?;
    let cfg = cfg.with_n(tasks.len());
    let ws: Vec<WeightVector> = (0..n_samples).map(|_| hyperprior.sample(rng)).collect();
    let parts = map_ordered(exec, &ws, |w| phi_parts(w.as_slice(), tasks, &cfg));
    let parts: Vec<PhiParts> = parts.into_iter().collect::<Result<_>>()?;
    let phis: Vec<f64> = parts.iter().map(|p| p.phi).collect();
    let lme = log_mean_exp(&phis)?;
    let lse = lme + (n_samples as f64).ln();
    let (mut kl_hyper, mut task_kl, mut reward) = (0.0, 0.0, 0.0);
    for p in &parts {
        let pi = (p.phi - lse).exp();
        if pi > 0.0 {
            kl_hyper += pi * (pi * n_samples as f64).ln();
        }
        task_kl += pi * p.task_kl;
        reward += pi * p.reward;
    }
    let value = match cfg.validate() {
        Ok(()) => lme / gibbs_scale(&cfg) - constant_terms(&cfg).constant_penalty(),
        Err(Error::ConstraintViolation(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(BoundEstimate {
        value,
        kl_hyper: kl_hyper.max(0.0),
        expected_task_kl_sum: task_kl,
        empirical_multitask_reward: reward,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcOptions {
    /// pSGLD steps after each task.
    pub k_iters: usize,
    pub psgld: PsgldConfig,
    /// Hyperprior draws for the bound estimate.
    pub bound_samples: usize,
    pub exec: Execution,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            k_iters: 100,
            psgld: PsgldConfig::default(),
            bound_samples: 32,
            exec: Execution::default(),
        }
    }
}

/// Runs PAC-Bayes MCMC for `cfg.n` tasks of length `cfg.m`. One chain is
/// started from a hyperprior draw and carried across tasks; each task uses
/// the chain's current state as its prior weights.
pub fn mcmc_lifelong_run(
    env: &BetaBernoulliEnv,
    hyperprior: &GaussianDiag,
    cfg: &BoundConfig,
    opts: &McmcOptions,
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
    let mut w = hyperprior.sample(&mut seed.init_rng());
    let mut precond = vec![0.0; cfg.k];
    let mut tasks: Vec<TaskSummary> = Vec::with_capacity(cfg.n);
    let mut records = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let start = Instant::now();
        let mut streams = seed.task_streams(i as u64);
        let task = env.sample_task(&mut streams.env);
        let prior = softmax(&w)?;
        let outcome = collect_task(&task, &prior, cfg.m, cfg.exponent, rule, &mut streams.interaction)?;
        tasks.push(TaskSummary::with_exponent(&outcome.dataset, cfg.estimator(), cfg.m, cfg.exponent)?);
        for _ in 0..opts.k_iters {
            let grad = grad_log_gibbs_density(&w, hyperprior, &tasks, cfg, opts.exec)?;
            let (next, state) = psgld_step(w.as_slice(), &grad, &precond, &opts.psgld, &mut streams.learner)?;
            w = WeightVector::new(next)?;
            precond = state;
        }
        let bound = mcmc_bound_estimate(
            hyperprior,
            &tasks,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_learner::posterior;
    use crate::environments::EnvId;
    use crate::estimators::{estimate_under_policy, EstimatorKind, Step, TaskDataset};
    use crate::math::kl_discrete;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tasks(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> (Vec<TaskDataset>, Vec<TaskSummary>) {
        let mut ds = Vec::new();
        let mut ts = Vec::new();
        for _ in 0..n {
            let steps = (0..m)
                .map(|_| Step {
                    action: rng.random_range(0..k),
                    reward: if rng.random_bool(0.4) { 1.0 } else { 0.0 },
                    behaviour_prob: rng.random_range(0.1..1.0),
                })
                .collect();
            let d = TaskDataset::from_steps(k, steps).unwrap();
            ts.push(TaskSummary::new(&d, EstimatorKind::ImportanceWeighted, m).unwrap());
            ds.push(d);
        }
        (ds, ts)
    }

    fn phi_oracle(w: &[f64], ds: &[TaskDataset], t1: f64, t2: f64, m: usize) -> f64 {
        let n = ds.len() as f64;
        let mf = m as f64;
        let c = t1 * t2 * n * (n * mf).sqrt() / (t1 * n.sqrt() + t2 * n * mf.sqrt());
        let p = softmax(&WeightVector::new(w.to_vec()).unwrap()).unwrap();
        let (mut reward, mut kl) = (0.0, 0.0);
        for d in ds {
            let est = crate::estimators::iw_estimate_vector(d).unwrap();
            for j in 0..m {
                let prefix = TaskDataset::from_steps(d.num_actions(), d.steps()[..j].to_vec()).unwrap();
                let q = posterior(&prefix.stats(), &p, m).unwrap();
                reward += estimate_under_policy(&est, &q).unwrap();
                kl += kl_discrete(&q, &p).unwrap();
            }
        }
        c * reward / (n * mf) - c * kl / (t2 * n * mf * mf.sqrt())
    }

    #[test]
    fn phi_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let (n, m, k) = (rng.random_range(1..4), rng.random_range(1..6), rng.random_range(2..6));
            let (ds, ts) = random_tasks(&mut rng, n, m, k);
            let (t1, t2) = (rng.random_range(1.0..60.0), rng.random_range(0.01..0.1));
            let cfg = BoundConfig::bernstein(t1, t2, 0.2, 99, m, k);
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let wv = WeightVector::new(w.clone()).unwrap();
            let a = phi(&wv, &ts, &cfg).unwrap();
            let b = phi_oracle(&w, &ds, t1, t2, m);
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
            let (c, _) = phi_with_gradient(&wv, &ts, &cfg, Execution::Parallel).unwrap();
            assert!((a - c).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn phi_without_data_is_zero() {
        let d = TaskDataset::from_steps(
            3,
            vec![Step {
                action: 0,
                reward: 0.0,
                behaviour_prob: 1.0,
            }],
        )
        .unwrap();
        let t = TaskSummary::new(&d, EstimatorKind::ImportanceWeighted, 1).unwrap();
        let cfg = BoundConfig::clipping(5.0, 1.0, 0.1, 1, 1, 3);
        let w = WeightVector::new(vec![0.4, -1.0, 2.0]).unwrap();
        assert!(phi(&w, &[t], &cfg).unwrap().abs() < 1e-15);
    }

    #[test]
    fn gibbs_scale_is_homogeneous_in_temperatures() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (t1, t2, c) = (rng.random_range(0.1..50.0), rng.random_range(0.1..10.0), rng.random_range(0.1..10.0));
            let (n, m) = (rng.random_range(1..200), rng.random_range(1..50));
            let a = gibbs_scale(&BoundConfig::clipping(t1, t2, 0.1, n, m, 4));
            let b = gibbs_scale(&BoundConfig::clipping(c * t1, c * t2, 0.1, n, m, 4));
            assert!((b - c * a).abs() < 1e-10 * b);
            let (nf, mf) = (n as f64, m as f64);
            let direct = t1 * t2 * nf * (nf * mf).sqrt() / (t1 * nf.sqrt() + t2 * nf * mf.sqrt());
            assert!((a - direct).abs() < 1e-10 * a);
        }
    }

    #[test]
    fn gibbs_density_without_tasks_is_hyperprior() {
        let hp = GaussianDiag::from_mean_std(vec![0.0, 2.0], vec![1.0, 0.5]).unwrap();
        let cfg = BoundConfig::clipping(5.0, 1.0, 0.1, 1, 1, 2);
        let w = WeightVector::new(vec![0.3, 1.1]).unwrap();
        let v = log_gibbs_density_unnormalized(&w, &hp, &[], &cfg).unwrap();
        assert_eq!(v, hp.log_density(w.as_slice()));
        let g = grad_log_gibbs_density(&w, &hp, &[], &cfg, Execution::Sequential).unwrap();
        assert_eq!(g, hp.grad_log_density(w.as_slice()));
    }

    #[test]
    fn psgld_tiny_step_barely_moves() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = PsgldConfig {
            step_size: 1e-14,
            ..PsgldConfig::default()
        };
        let (w, _) = psgld_step(&[1.0, -2.0], &[0.5, 3.0], &[1.0, 1.0], &cfg, &mut rng).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-6 && (w[1] + 2.0).abs() < 1e-6);
        assert!(matches!(
            psgld_step(&[1.0], &[f64::NAN], &[1.0], &cfg, &mut rng),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn psgld_identity_preconditioner_samples_standard_normal() {
        // decay = 1 freezes the state at (1 − eps)², so G = 1 throughout.
        let cfg = PsgldConfig {
            step_size: 0.05,
            decay: 1.0,
            eps: 1e-5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let state = vec![(1.0 - cfg.eps) * (1.0 - cfg.eps)];
        let mut w = vec![0.0];
        let steps = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..steps {
            let g = [-w[0]];
            w = psgld_step(&w, &g, &state, &cfg, &mut rng).unwrap().0;
            s1 += w[0];
            s2 += w[0] * w[0];
        }
        let mean = s1 / steps as f64;
        let var = s2 / steps as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn log_mean_exp_is_stable() {
        let xs: Vec<f64> = (0..=100).map(|i| -50.0 + i as f64).collect();
        let v = log_mean_exp(&xs).unwrap();
        assert!(v.is_finite());
        let naive = (xs.iter().map(|x| x.exp()).sum::<f64>() / xs.len() as f64).ln();
        assert!((v - naive).abs() < 1e-12);
        assert!(log_mean_exp(&[1000.0, 1000.0]).unwrap() == 1000.0);
        assert!(log_mean_exp(&[]).is_err());
    }

    #[test]
    fn bound_estimate_kl_fields_reproduce_log_mean_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (_, ts) = random_tasks(&mut rng, 3, 5, 4);
        let cfg = BoundConfig::clipping(15.0, 3.0, 0.2, 3, 5, 4);
        let hp = GaussianDiag::standard(4);
        let est = mcmc_bound_estimate(&hp, &ts, &cfg, 16, Execution::Sequential, &mut rng).unwrap();
        let inputs = crate::bounds::BoundInputs {
            empirical_multitask_reward: est.empirical_multitask_reward,
            kl_hyper: est.kl_hyper,
            expected_task_kl_sum: est.expected_task_kl_sum,
        };
        let via_breakdown = crate::bounds::lower_bound(&inputs, &cfg).unwrap();
        assert!((via_breakdown - est.value).abs() < 1e-10, "{via_breakdown} vs {}", est.value);
    }

    #[test]
    fn run_is_deterministic() {
        let env = BetaBernoulliEnv::builtin(EnvId::Env1);
        let cfg = BoundConfig::clipping(50.0, 10.0, 0.1, 4, 10, 10);
        let opts = McmcOptions {
            k_iters: 10,
            bound_samples: 4,
            ..McmcOptions::default()
        };
        let seed = RunSeed::new(5, 1, 1);
        let a = mcmc_lifelong_run(&env, &GaussianDiag::standard(10), &cfg, &opts, &seed).unwrap();
        let b = mcmc_lifelong_run(
            &env,
            &GaussianDiag::standard(10),
            &cfg,
            &McmcOptions {
                exec: Execution::Sequential,
                ..opts
            },
            &seed,
        )
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.avg_reward, y.avg_reward);
            assert_eq!(x.bound_value.to_bits(), y.bound_value.to_bits());
        }
    }
}
