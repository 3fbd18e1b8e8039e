//! Beta-Bernoulli task environments.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// The three built-in environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Env1,
    Env2,
    Env3,
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "env1" => Ok(EnvId::Env1),
            "env2" => Ok(EnvId::Env2),
            "env3" => Ok(EnvId::Env3),
            other => Err(Error::invalid(format!(
                "unknown environment '{other}' (expected env1, env2 or env3)"
            ))),
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvId::Env1 => "env1",
            EnvId::Env2 => "env2",
            EnvId::Env3 => "env3",
        })
    }
}

/// Per-action Beta(alpha, beta) distributions over Bernoulli success rates.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaBernoulliEnv {
    shapes: Vec<(f64, f64)>,
    gammas: Vec<(Gamma<f64>, Gamma<f64>)>,
}

impl BetaBernoulliEnv {
    pub fn new(shapes: Vec<(f64, f64)>) -> Result<Self> {
        if shapes.len() < 2 {
            return Err(Error::invalid(format!(
                "an environment needs at least 2 actions, got {}",
                shapes.len()
            )));
        }
        let mut gammas = Vec::with_capacity(shapes.len());
        for (a, &(alpha, beta)) in shapes.iter().enumerate() {
            if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
                return Err(Error::invalid(format!(
                    "action {a}: Beta shapes must be positive, got ({alpha}, {beta})"
                )));
            }
            let ga = Gamma::new(alpha, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
            let gb = Gamma::new(beta, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
            gammas.push((ga, gb));
        }
        Ok(Self { shapes, gammas })
    }

    pub fn builtin(id: EnvId) -> Self {
        let shapes = match id {
            EnvId::Env1 => (0..10).map(|a| if a < 8 { (5.0, 20.0) } else { (20.0, 5.0) }).collect(),
            EnvId::Env2 => (0..20).map(|a| if a < 16 { (5.0, 20.0) } else { (20.0, 5.0) }).collect(),
            EnvId::Env3 => {
                let mut shapes = vec![(1.0, 4.0); 10];
                // means rise linearly from 0.2 to 0.8 with alpha + beta = 25
                shapes.extend((0..10).map(|j| {
                    let mean = 0.2 + 0.6 * j as f64 / 9.0;
                    (25.0 * mean, 25.0 * (1.0 - mean))
                }));
                shapes
            }
        };
        Self::new(shapes).expect("built-in shapes are valid")
    }

    pub fn num_actions(&self) -> usize {
        self.shapes.len()
    }

    pub fn shapes(&self) -> &[(f64, f64)] {
        &self.shapes
    }

    /// `alpha / (alpha + beta)` for each action.
    pub fn mean_rewards(&self) -> Vec<f64> {
        self.shapes.iter().map(|(a, b)| a / (a + b)).collect()
    }

    /// Draws every `p[a]` independently as `X / (X + Y)` with
    /// `X ~ Gamma(alpha, 1)`, `Y ~ Gamma(beta, 1)`.
    pub fn sample_task<R: Rng + ?Sized>(&self, rng: &mut R) -> Task {
        let p = self
            .gammas
            .iter()
            .zip(&self.shapes)
            .map(|((ga, gb), (alpha, beta))| {
                let x = ga.sample(rng);
                let y = gb.sample(rng);
                let s = x + y;
                if s > 0.0 {
                    x / s
                } else {
                    // both draws underflowed (tiny shapes); fall back to the mean
                    alpha / (alpha + beta)
                }
            })
            .collect();
        Task { p }
    }
}

/// One bandit task: a Bernoulli success probability per action.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    p: Vec<f64>,
}

impl Task {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some((a, v)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("p[{a}] = {v} is not in [0, 1]")));
        }
        Ok(Self { p })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn num_actions(&self) -> usize {
        self.p.len()
    }

    pub fn sample_reward<R: Rng + ?Sized>(&self, action: usize, rng: &mut R) -> Result<f64> {
        let p = *self.p.get(action).ok_or_else(|| {
            Error::invalid(format!("action {action} out of range for K = {}", self.p.len()))
        })?;
        let u: f64 = rng.random();
        Ok(if u < p { 1.0 } else { 0.0 })
    }
}
