//! PAC-Bayesian lifelong learning for multi-armed bandits.
//!
//! A lifelong learner faces a stream of bandit tasks drawn from one
//! environment. Within a task it runs a closed-form base learner from a prior
//! over actions; across tasks it updates a hyperposterior over the prior
//! weights, either by variational inference ([`vi`]) or by Langevin sampling
//! ([`mcmc`]), and reports a lower bound on its expected reward.

pub mod base_learner;
pub mod baselines;
pub mod bounds;
pub mod environments;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod lifelong;
pub mod math;
pub mod mcmc;
pub mod objective;
pub mod par;
pub mod seed;
pub mod vi;

pub use error::{Error, Result};
