//! Probability vectors over actions, softmax weight vectors and diagonal
//! Gaussians over weight vectors.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// A probability distribution over `K >= 2` actions.
///
/// Used for priors, task posteriors and behaviour policies alike.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::invalid(format!(
                "an action distribution needs at least 2 actions, got {}",
                probs.len()
            )));
        }
        if let Some((a, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::invalid(format!("probability {a} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Builds a distribution from non-negative masses by normalizing them.
    pub fn from_unnormalized(mut masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Numerical(format!("cannot normalize masses summing to {total}")));
        }
        masses.iter_mut().for_each(|m| *m /= total);
        Self::new(masses)
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn point_mass(k: usize, action: usize) -> Result<Self> {
        if action >= k {
            return Err(Error::invalid(format!("action {action} out of range for K = {k}")));
        }
        let mut probs = vec![0.0; k];
        probs[action] = 1.0;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_actions(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.probs[action]
    }

    /// Draws an action by inverting the cumulative distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // u landed in the rounding gap above the final partial sum
        self.probs
            .iter()
            .rposition(|p| *p > 0.0)
            .unwrap_or(self.probs.len() - 1)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Unconstrained logits whose softmax is a prior over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = w.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("weight {k} is not finite ({v})")));
        }
        Ok(Self(w))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Diagonal Gaussian over weight vectors, stored as mean and log standard
/// deviation so that every real parameter vector is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDiag {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianDiag {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::invalid(format!(
                "mean has {} entries but log_std has {}",
                mean.len(),
                log_std.len()
            )));
        }
        if mean.iter().chain(&log_std).any(|v| !v.is_finite()) {
            return Err(Error::invalid("Gaussian parameters must be finite"));
        }
        Ok(Self { mean, log_std })
    }

    pub fn from_mean_std(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if let Some(s) = std.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::invalid(format!("standard deviation must be positive, got {s}")));
        }
        Self::new(mean, std.iter().map(|s| s.ln()).collect())
    }

    /// N(0, I) in `k` dimensions.
    pub fn standard(k: usize) -> Self {
        Self {
            mean: vec![0.0; k],
            log_std: vec![0.0; k],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    /// `mean + std * noise`, the reparameterized sample for a fixed noise draw.
    pub fn reparameterize(&self, noise: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(noise)
            .map(|((m, l), z)| m + l.exp() * z)
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightVector {
        let noise: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        WeightVector(self.reparameterize(&noise))
    }

    pub fn log_density(&self, w: &[f64]) -> f64 {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(w)
            .map(|((m, l), x)| {
                let z = (x - m) * (-l).exp();
                -0.5 * z * z - l - half_ln_2pi
            })
            .sum()
    }

    /// Gradient of [`log_density`](Self::log_density) with respect to `w`.
    pub fn grad_log_density(&self, w: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(w)
            .map(|((m, l), x)| -(x - m) * (-2.0 * l).exp())
            .collect()
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if *v > bv { (i, *v) } else { (bi, bv) })
        .0
}

/// Numerically stable `ln Σ exp(x)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Writes the max-shifted softmax of `logits` into `out` and returns
/// `ln Σ exp(logits)`. Shared by the hot loops of both learners.
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, x) in out.iter_mut().zip(logits) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    max + total.ln()
}

pub fn softmax(w: &WeightVector) -> Result<ActionDistribution> {
    if w.len() < 2 {
        return Err(Error::invalid("softmax needs at least 2 weights"));
    }
    let mut out = vec![0.0; w.len()];
    softmax_into(w.as_slice(), &mut out);
    Ok(ActionDistribution { probs: out })
}

/// `KL(q || p)` for distributions over the same actions, with `0 ln 0 = 0`.
pub fn kl_discrete(q: &ActionDistribution, p: &ActionDistribution) -> Result<f64> {
    if q.num_actions() != p.num_actions() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            q.num_actions(),
            p.num_actions()
        )));
    }
    let mut kl = 0.0;
    for (a, (&qa, &pa)) in q.probs.iter().zip(&p.probs).enumerate() {
        if qa == 0.0 {
            continue;
        }
        if pa == 0.0 {
            return Err(Error::DivergenceInfinite { action: a, q: qa });
        }
        kl += qa * (qa / pa).ln();
    }
    // rounding can produce tiny negatives when q == p
    Ok(kl.max(0.0))
}

/// Closed-form `KL(q || p)` between diagonal Gaussians.
pub fn kl_gaussian_diag(q: &GaussianDiag, p: &GaussianDiag) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", q.dim(), p.dim())));
    }
    let mut kl = 0.0;
    for k in 0..q.dim() {
        let var_ratio = (2.0 * (q.log_std[k] - p.log_std[k])).exp();
        let diff = q.mean[k] - p.mean[k];
        let p_var = (2.0 * p.log_std[k]).exp();
        kl += p.log_std[k] - q.log_std[k] + 0.5 * (var_ratio + diff * diff / p_var) - 0.5;
    }
    Ok(kl.max(0.0))
}

/// Gradient of `KL(q || p)` with respect to `q`'s `(mean, log_std)`.
pub fn kl_gaussian_diag_grad(q: &GaussianDiag, p: &GaussianDiag) -> (Vec<f64>, Vec<f64>) {
    let mut d_mean = Vec::with_capacity(q.dim());
    let mut d_log_std = Vec::with_capacity(q.dim());
    for k in 0..q.dim() {
        let p_var = (2.0 * p.log_std[k]).exp();
        d_mean.push((q.mean[k] - p.mean[k]) / p_var);
        d_log_std.push((2.0 * (q.log_std[k] - p.log_std[k])).exp() - 1.0);
    }
    (d_mean, d_log_std)
}

/// Mixture `(1 - eps) q + eps * uniform`; every entry is at least `eps / K`.
pub fn epsilon_soft(q: &ActionDistribution, eps: f64) -> Result<ActionDistribution> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {eps}")));
    }
    let floor = eps / q.num_actions() as f64;
    Ok(ActionDistribution {
        probs: q.probs.iter().map(|p| (1.0 - eps) * p + floor).collect(),
    })
}
