//! Experiment configuration: a flat TOML document whose keys mirror the CLI
//! flags. Missing keys take the paper's defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::base_learner::RewardExponent;
use crate::bounds::{BoundConfig, BoundKind};
use crate::environments::{BetaBernoulliEnv, EnvId};
use crate::error::{Error, Result};
use crate::math::GaussianDiag;
use crate::mcmc::{McmcOptions, PsgldConfig};
use crate::vi::{AdamConfig, ViOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lfs,
    Arr,
    Pbvi,
    Pbmcmc,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lfs" => Ok(Algorithm::Lfs),
            "arr" => Ok(Algorithm::Arr),
            "pbvi" => Ok(Algorithm::Pbvi),
            "pbmcmc" => Ok(Algorithm::Pbmcmc),
            other => Err(Error::Config(format!(
                "unknown algorithm '{other}' (expected lfs, arr, pbvi or pbmcmc)"
            ))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Lfs => "lfs",
            Algorithm::Arr => "arr",
            Algorithm::Pbvi => "pbvi",
            Algorithm::Pbmcmc => "pbmcmc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperpriorKind {
    /// N(0, I).
    Uninformative,
    /// Mean zero except the last coordinate, which is 2; unit std.
    InformativeEnv3,
    /// `hyperprior_mean` / `hyperprior_std`.
    Explicit,
}

impl FromStr for HyperpriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uninformative" => Ok(HyperpriorKind::Uninformative),
            "informative-env3" => Ok(HyperpriorKind::InformativeEnv3),
            "explicit" => Ok(HyperpriorKind::Explicit),
            other => Err(Error::Config(format!(
                "unknown hyperprior '{other}' (expected uninformative, informative-env3 or explicit)"
            ))),
        }
    }
}

/// One experiment; the `temperatures`, `epsilons` and `taus` grids are only
/// read by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in environment; ignored when `shapes` is set.
    pub environment: EnvId,
    /// Custom Beta shape pairs, one per action.
    pub shapes: Option<Vec<(f64, f64)>>,
    pub algorithm: Algorithm,
    pub bound: BoundKind,
    pub t1: f64,
    pub t2: f64,
    /// Use the largest valid Bernstein `T2 = (ε/K)√m` instead of `t2`.
    pub t2_max: bool,
    pub epsilon: f64,
    pub tau: f64,
    pub delta: f64,
    pub c_n: f64,
    pub n: usize,
    pub m: usize,
    /// Optimizer steps per task; 50 for VI and 100 for MCMC when unset.
    pub k_iters: Option<usize>,
    /// Independent runs averaged into one repeat.
    pub inner_runs: usize,
    pub repeats: usize,
    pub seed: u64,
    pub hyperprior: HyperpriorKind,
    pub hyperprior_mean: Option<Vec<f64>>,
    pub hyperprior_std: Option<Vec<f64>>,
    /// Reward statistic in the base learner's exponent; experiments use the
    /// per-action reward total unless set to `mean`.
    pub exponent: RewardExponent,
    /// Hyperposterior draws for the recorded bound; 16 for VI, 32 for MCMC
    /// when unset.
    pub bound_samples: Option<usize>,
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub psgld_step_size: f64,
    pub psgld_decay: f64,
    pub psgld_eps: f64,
    /// Run a Bernstein configuration that violates `λ2 ≤ m·ε/K`; its bound
    /// column is then NaN.
    pub allow_invalid_bound: bool,
    pub out_dir: PathBuf,
    /// Output file stem; derived from the configuration when unset.
    pub name: Option<String>,
    /// Also write every per-run record.
    pub raw: bool,
    pub temperatures: Vec<(f64, f64)>,
    pub epsilons: Vec<f64>,
    pub taus: Vec<f64>,
    /// Divide δ by the number of sweep cells.
    pub union_bound_delta: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let psgld = PsgldConfig::default();
        Self {
            environment: EnvId::Env1,
            shapes: None,
            algorithm: Algorithm::Pbvi,
            bound: BoundKind::Clipping,
            t1: 50.0,
            t2: 10.0,
            t2_max: false,
            epsilon: 0.05,
            tau: 0.1,
            delta: 0.05,
            c_n: 0.0,
            n: 100,
            m: 20,
            k_iters: None,
            inner_runs: 10,
            repeats: 50,
            seed: 0,
            hyperprior: HyperpriorKind::Uninformative,
            hyperprior_mean: None,
            hyperprior_std: None,
            exponent: RewardExponent::Sum,
            bound_samples: None,
            adam_lr: adam.lr,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            psgld_step_size: psgld.step_size,
            psgld_decay: psgld.decay,
            psgld_eps: psgld.eps,
            allow_invalid_bound: false,
            out_dir: PathBuf::from("results"),
            name: None,
            raw: false,
            temperatures: vec![(5.0, 1.0), (15.0, 3.0), (50.0, 10.0)],
            epsilons: vec![0.05, 0.1, 0.2],
            taus: vec![0.1, 0.2, 0.5],
            union_bound_delta: false,
        }
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidInput(msg) => Error::Config(msg),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn env(&self) -> Result<BetaBernoulliEnv> {
        match &self.shapes {
            Some(shapes) => BetaBernoulliEnv::new(shapes.clone()).map_err(config_err),
            None => Ok(BetaBernoulliEnv::builtin(self.environment)),
        }
    }

    pub fn num_actions(&self) -> usize {
        match &self.shapes {
            Some(s) => s.len(),
            None => BetaBernoulliEnv::builtin(self.environment).num_actions(),
        }
    }

    pub fn effective_t2(&self) -> f64 {
        if self.t2_max {
            BoundConfig::max_bernstein_t2(self.epsilon, self.num_actions(), self.m)
        } else {
            self.t2
        }
    }

    pub fn bound_config(&self) -> BoundConfig {
        let k = self.num_actions();
        let mut cfg = match self.bound {
            BoundKind::Bernstein => BoundConfig::bernstein(self.t1, self.effective_t2(), self.epsilon, self.n, self.m, k),
            BoundKind::Clipping => BoundConfig::clipping(self.t1, self.effective_t2(), self.tau, self.n, self.m, k),
        };
        cfg.delta = self.delta;
        cfg.c_n = self.c_n;
        cfg.exponent = self.exponent;
        cfg
    }

    pub fn hyperprior_dist(&self) -> Result<GaussianDiag> {
        let k = self.num_actions();
        match self.hyperprior {
            HyperpriorKind::Uninformative => Ok(GaussianDiag::standard(k)),
            HyperpriorKind::InformativeEnv3 => {
                let mut mean = vec![0.0; k];
                mean[k - 1] = 2.0;
                GaussianDiag::new(mean, vec![0.0; k]).map_err(config_err)
            }
            HyperpriorKind::Explicit => {
                let (Some(mean), Some(std)) = (&self.hyperprior_mean, &self.hyperprior_std) else {
                    return Err(Error::Config(
                        "hyperprior = \"explicit\" needs hyperprior_mean and hyperprior_std".into(),
                    ));
                };
                if mean.len() != k || std.len() != k {
                    return Err(Error::Config(format!(
                        "explicit hyperprior has {} means and {} stds but the environment has {k} actions",
                        mean.len(),
                        std.len()
                    )));
                }
                GaussianDiag::from_mean_std(mean.clone(), std.clone()).map_err(config_err)
            }
        }
    }

    pub fn vi_options(&self) -> ViOptions {
        ViOptions {
            k_iters: self.k_iters.unwrap_or(50),
            adam: AdamConfig {
                lr: self.adam_lr,
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                eps: self.adam_eps,
            },
            bound_samples: self.bound_samples.unwrap_or(16),
            ..ViOptions::default()
        }
    }

    pub fn mcmc_options(&self) -> McmcOptions {
        McmcOptions {
            k_iters: self.k_iters.unwrap_or(100),
            psgld: PsgldConfig {
                step_size: self.psgld_step_size,
                decay: self.psgld_decay,
                eps: self.psgld_eps,
            },
            bound_samples: self.bound_samples.unwrap_or(32),
            ..McmcOptions::default()
        }
    }

    /// Checks everything a run needs; errors are [`Error::Config`] or, for
    /// the Bernstein `λ2` limit, [`Error::ConstraintViolation`].
    pub fn validate(&self) -> Result<()> {
        self.env()?;
        if self.repeats == 0 || self.inner_runs == 0 {
            return Err(Error::Config("repeats and inner_runs must be at least 1".into()));
        }
        let cfg = self.bound_config();
        cfg.validate_objective().map_err(config_err)?;
        if !self.allow_invalid_bound && matches!(self.algorithm, Algorithm::Pbvi | Algorithm::Pbmcmc) {
            cfg.validate().map_err(config_err)?;
        }
        self.hyperprior_dist()?;
        if self.bound_samples == Some(0) {
            return Err(Error::Config("bound_samples must be at least 1".into()));
        }
        let adam_ok = self.adam_lr > 0.0
            && (0.0..1.0).contains(&self.adam_beta1)
            && (0.0..1.0).contains(&self.adam_beta2)
            && self.adam_eps > 0.0;
        if !adam_ok {
            return Err(Error::Config("Adam needs lr > 0, betas in [0, 1) and eps > 0".into()));
        }
        let psgld_ok = self.psgld_step_size > 0.0 && (0.0..=1.0).contains(&self.psgld_decay) && self.psgld_eps > 0.0;
        if !psgld_ok {
            return Err(Error::Config("pSGLD needs step_size > 0, decay in [0, 1] and eps > 0".into()));
        }
        Ok(())
    }

    /// File stem such as `env1-pbvi-clipping-T50-10-tau0.1`.
    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let env = match &self.shapes {
            Some(_) => "custom".to_string(),
            None => self.environment.to_string(),
        };
        let mut label = format!("{env}-{}-{}", self.algorithm, self.bound);
        if matches!(self.algorithm, Algorithm::Pbvi | Algorithm::Pbmcmc) {
            if self.t2_max {
                label.push_str(&format!("-T{}-max", self.t1));
            } else {
                label.push_str(&format!("-T{}-{}", self.t1, self.t2));
            }
        }
        match self.bound {
            BoundKind::Bernstein => label.push_str(&format!("-eps{}", self.epsilon)),
            BoundKind::Clipping => label.push_str(&format!("-tau{}", self.tau)),
        }
        if self.hyperprior != HyperpriorKind::Uninformative {
            label.push_str(match self.hyperprior {
                HyperpriorKind::InformativeEnv3 => "-informative",
                _ => "-explicit",
            });
        }
        if self.exponent == RewardExponent::Mean {
            label.push_str("-mean");
        }
        label
    }
}
