//! Lower bounds on the marginal transfer reward.
//!
//! Both bounds share the shape
//!
//! ```text
//! reward − (1/λ1 + 1/(nλ2))·KL(𝒬‖𝒫) − 1/(nmλ2)·E Σ_ij KL(Q_ij‖P)
//!        − c_n − λ1/(8n) − concentration(λ2) − ln(2/δ)/λ1 − ln(2m/δ)/(nλ2)
//! ```
//!
//! with `λ1 = T1√n`, `λ2 = T2√m`. The Bernstein bound uses the unclipped
//! importance-weighted reward and `concentration = λ2(e−2)/(b_min m)` with
//! `b_min = ε/K`; it requires `λ2 ≤ m·b_min`. The clipping bound uses the
//! clipped reward and `concentration = λ2(1+τ)²/(8m)`.

use serde::{Deserialize, Serialize};

use crate::base_learner::RewardExponent;
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;

/// Relative slack on the Bernstein `λ2 ≤ m·b_min` check, so that choosing
/// `T2 = (ε/K)√m` exactly is not rejected because of rounding.
const LAMBDA2_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Bernstein,
    Clipping,
}

impl std::str::FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernstein" => Ok(BoundKind::Bernstein),
            "clipping" => Ok(BoundKind::Clipping),
            other => Err(Error::invalid(format!(
                "unknown bound '{other}' (expected bernstein or clipping)"
            ))),
        }
    }
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundKind::Bernstein => "bernstein",
            BoundKind::Clipping => "clipping",
        })
    }
}

/// Constants of a bound evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConfig {
    pub kind: BoundKind,
    pub delta: f64,
    pub t1: f64,
    pub t2: f64,
    /// Exploration floor of the ε-soft behaviour policy (Bernstein only).
    pub epsilon: f64,
    /// Importance-weight clip level (clipping only).
    pub tau: f64,
    /// History-dependence penalty; 0 unless the user states otherwise.
    pub c_n: f64,
    /// Number of tasks observed.
    pub n: usize,
    /// Steps per task.
    pub m: usize,
    /// Number of actions.
    pub k: usize,
    /// Reward statistic in the base learner's exponent.
    pub exponent: RewardExponent,
}

impl BoundConfig {
    pub fn bernstein(t1: f64, t2: f64, epsilon: f64, n: usize, m: usize, k: usize) -> Self {
        Self {
            kind: BoundKind::Bernstein,
            delta: 0.05,
            t1,
            t2,
            epsilon,
            tau: 0.0,
            c_n: 0.0,
            n,
            m,
            k,
            exponent: RewardExponent::Mean,
        }
    }

    pub fn clipping(t1: f64, t2: f64, tau: f64, n: usize, m: usize, k: usize) -> Self {
        Self {
            kind: BoundKind::Clipping,
            delta: 0.05,
            t1,
            t2,
            epsilon: 0.0,
            tau,
            c_n: 0.0,
            n,
            m,
            k,
            exponent: RewardExponent::Mean,
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }

    pub fn lambda1(&self) -> f64 {
        self.t1 * (self.n as f64).sqrt()
    }

    pub fn lambda2(&self) -> f64 {
        self.t2 * (self.m as f64).sqrt()
    }

    /// Guaranteed minimum behaviour probability `ε/K`.
    pub fn b_min(&self) -> f64 {
        self.epsilon / self.k as f64
    }

    /// The largest `T2` for which the Bernstein bound is valid: `(ε/K)√m`.
    pub fn max_bernstein_t2(epsilon: f64, k: usize, m: usize) -> f64 {
        epsilon / k as f64 * (m as f64).sqrt()
    }

    pub fn estimator(&self) -> EstimatorKind {
        match self.kind {
            BoundKind::Bernstein => EstimatorKind::ImportanceWeighted,
            BoundKind::Clipping => EstimatorKind::Clipped { tau: self.tau },
        }
    }

    /// Coefficient of `KL(𝒬‖𝒫)`: `1/λ1 + 1/(nλ2)`.
    pub fn hyper_kl_coef(&self) -> f64 {
        1.0 / self.lambda1() + 1.0 / (self.n as f64 * self.lambda2())
    }

    /// Coefficient of the summed task KL terms: `1/(nmλ2)`.
    pub fn task_kl_coef(&self) -> f64 {
        1.0 / (self.n as f64 * self.m as f64 * self.lambda2())
    }

    /// Checks the parameters shared by the learners' objectives (which do
    /// not need the Bernstein `λ2` constraint).
    pub fn validate_objective(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("T1", self.t1)?;
        positive("T2", self.t2)?;
        if self.n == 0 || self.m == 0 {
            return Err(Error::invalid("n and m must be at least 1"));
        }
        if self.k < 2 {
            return Err(Error::invalid("K must be at least 2"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if !self.c_n.is_finite() {
            return Err(Error::invalid("c_n must be finite"));
        }
        match self.kind {
            BoundKind::Bernstein => {
                if !(0.0..=1.0).contains(&self.epsilon) {
                    return Err(Error::invalid(format!(
                        "epsilon must lie in [0, 1], got {}",
                        self.epsilon
                    )));
                }
            }
            BoundKind::Clipping => positive("tau", self.tau)?,
        }
        Ok(())
    }

    /// Full validity check for evaluating a bound, including
    /// `λ2 ≤ m·ε/K` for the Bernstein bound.
    pub fn validate(&self) -> Result<()> {
        self.validate_objective()?;
        if self.kind == BoundKind::Bernstein {
            self.check_lambda2()?;
        }
        Ok(())
    }

    fn check_lambda2(&self) -> Result<()> {
        let limit = self.m as f64 * self.b_min();
        let lambda2 = self.lambda2();
        if lambda2 > limit * (1.0 + LAMBDA2_SLACK) {
            return Err(Error::ConstraintViolation(format!(
                "Bernstein bound requires lambda2 = T2*sqrt(m) <= m*epsilon/K; \
                 got T2 = {} so lambda2 = {lambda2} > {limit} (largest valid T2 is {})",
                self.t2,
                Self::max_bernstein_t2(self.epsilon, self.k, self.m)
            )));
        }
        Ok(())
    }
}

/// The data-dependent quantities entering a bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundInputs {
    /// Empirical multi-task reward (clipped for the clipping bound).
    pub empirical_multitask_reward: f64,
    /// `KL(𝒬‖𝒫)`.
    pub kl_hyper: f64,
    /// `E_{P∼𝒬} Σ_i Σ_j KL(A(D_i^{:j−1}, P) ‖ P)`.
    pub expected_task_kl_sum: f64,
}

/// A bound split into its additive terms. Penalties are stored as the
/// positive amounts that get subtracted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyBreakdown {
    pub empirical_reward: f64,
    pub hyper_kl: f64,
    pub task_kl: f64,
    pub c_n: f64,
    pub transfer_concentration: f64,
    pub estimator_concentration: f64,
    pub transfer_confidence: f64,
    pub multitask_confidence: f64,
}

impl PenaltyBreakdown {
    pub fn constant_penalty(&self) -> f64 {
        self.c_n
            + self.transfer_concentration
            + self.estimator_concentration
            + self.transfer_confidence
            + self.multitask_confidence
    }

    pub fn total(&self) -> f64 {
        self.empirical_reward - self.hyper_kl - self.task_kl - self.constant_penalty()
    }
}

fn check_inputs(inp: &BoundInputs) -> Result<()> {
    if !inp.empirical_multitask_reward.is_finite() {
        return Err(Error::invalid("empirical reward must be finite"));
    }
    if !(inp.kl_hyper >= 0.0 && inp.expected_task_kl_sum >= 0.0) {
        return Err(Error::invalid(format!(
            "KL terms must be non-negative, got {} and {}",
            inp.kl_hyper, inp.expected_task_kl_sum
        )));
    }
    Ok(())
}

/// Terms that do not depend on the data; shared with the MCMC estimator.
pub(crate) fn constant_terms(cfg: &BoundConfig) -> PenaltyBreakdown {
    let n = cfg.n as f64;
    let m = cfg.m as f64;
    let l1 = cfg.lambda1();
    let l2 = cfg.lambda2();
    let estimator_concentration = match cfg.kind {
        BoundKind::Bernstein => l2 * (std::f64::consts::E - 2.0) / (cfg.b_min() * m),
        BoundKind::Clipping => l2 * (1.0 + cfg.tau).powi(2) / (8.0 * m),
    };
    PenaltyBreakdown {
        empirical_reward: 0.0,
        hyper_kl: 0.0,
        task_kl: 0.0,
        c_n: cfg.c_n,
        transfer_concentration: l1 / (8.0 * n),
        estimator_concentration,
        transfer_confidence: (2.0 / cfg.delta).ln() / l1,
        multitask_confidence: (2.0 * m / cfg.delta).ln() / (n * l2),
    }
}

/// Every additive term of the bound selected by `cfg.kind`.
pub fn penalty_breakdown(inp: &BoundInputs, cfg: &BoundConfig) -> Result<PenaltyBreakdown> {
    cfg.validate()?;
    check_inputs(inp)?;
    Ok(PenaltyBreakdown {
        empirical_reward: inp.empirical_multitask_reward,
        hyper_kl: cfg.hyper_kl_coef() * inp.kl_hyper,
        task_kl: cfg.task_kl_coef() * inp.expected_task_kl_sum,
        ..constant_terms(cfg)
    })
}

fn require_kind(cfg: &BoundConfig, kind: BoundKind) -> Result<()> {
    if cfg.kind == kind {
        Ok(())
    } else {
        Err(Error::invalid(format!("expected a {kind} configuration, got {}", cfg.kind)))
    }
}

fn evaluate(inp: &BoundInputs, cfg: &BoundConfig) -> Result<f64> {
    let n = cfg.n as f64;
    let m = cfg.m as f64;
    let l1 = cfg.lambda1();
    let l2 = cfg.lambda2();
    let concentration = match cfg.kind {
        BoundKind::Bernstein => l2 * (std::f64::consts::E - 2.0) / (cfg.b_min() * m),
        BoundKind::Clipping => l2 * (1.0 + cfg.tau).powi(2) / (8.0 * m),
    };
    Ok(inp.empirical_multitask_reward
        - (1.0 / l1 + 1.0 / (n * l2)) * inp.kl_hyper
        - inp.expected_task_kl_sum / (n * m * l2)
        - cfg.c_n
        - l1 / (8.0 * n)
        - concentration
        - (2.0 / cfg.delta).ln() / l1
        - (2.0 * m / cfg.delta).ln() / (n * l2))
}

/// Bernstein lower bound (unclipped estimates, ε-soft behaviour).
pub fn bernstein_lower_bound(inp: &BoundInputs, cfg: &BoundConfig) -> Result<f64> {
    require_kind(cfg, BoundKind::Bernstein)?;
    cfg.validate()?;
    check_inputs(inp)?;
    evaluate(inp, cfg)
}

/// Clipping lower bound (weights clipped at `1 + τ`).
pub fn clipping_lower_bound(inp: &BoundInputs, cfg: &BoundConfig) -> Result<f64> {
    require_kind(cfg, BoundKind::Clipping)?;
    cfg.validate()?;
    check_inputs(inp)?;
    evaluate(inp, cfg)
}

/// Dispatches on `cfg.kind`.
pub fn lower_bound(inp: &BoundInputs, cfg: &BoundConfig) -> Result<f64> {
    match cfg.kind {
        BoundKind::Bernstein => bernstein_lower_bound(inp, cfg),
        BoundKind::Clipping => clipping_lower_bound(inp, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bernstein_hand_value() {
        // n = m = 1, K = 10, ε = 0.5 → b_min = 0.05; T2 = b_min puts λ2 at its limit
        let cfg = BoundConfig::bernstein(5.0, 0.05, 0.5, 1, 1, 10);
        let b = bernstein_lower_bound(&BoundInputs::default(), &cfg).unwrap();
        assert!((b - (-75.85864680156055)).abs() < 1e-10, "{b}");
    }

    #[test]
    fn clipping_hand_value() {
        let cfg = BoundConfig::clipping(5.0, 1.0, 0.5, 1, 1, 10);
        let b = clipping_lower_bound(&BoundInputs::default(), &cfg).unwrap();
        assert!((b - (-5.332905344936723)).abs() < 1e-12, "{b}");
    }

    #[test]
    fn bernstein_rejects_large_lambda2() {
        let cfg = BoundConfig::bernstein(50.0, 10.0, 0.05, 100, 20, 10);
        let err = bernstein_lower_bound(&BoundInputs::default(), &cfg).unwrap_err();
        assert!(matches!(err, Error::ConstraintViolation(_)));
        assert!(err.to_string().contains("lambda2"));

        let t2 = BoundConfig::max_bernstein_t2(0.05, 10, 20);
        let cfg = BoundConfig::bernstein(5.0, t2, 0.05, 100, 20, 10);
        assert!(cfg.validate().is_ok());
        assert!(cfg.validate_objective().is_ok());
        let cfg = BoundConfig::bernstein(5.0, t2 * 1.001, 0.05, 100, 20, 10);
        assert!(cfg.validate().is_err());
        assert!(cfg.validate_objective().is_ok());
    }

    #[test]
    fn kind_and_parameter_errors() {
        let clip = BoundConfig::clipping(5.0, 1.0, 0.1, 10, 20, 10);
        assert!(bernstein_lower_bound(&BoundInputs::default(), &clip).is_err());
        let bad_tau = BoundConfig::clipping(5.0, 1.0, 0.0, 10, 20, 10);
        assert!(clipping_lower_bound(&BoundInputs::default(), &bad_tau).is_err());
        let bad_kl = BoundInputs {
            kl_hyper: -1.0,
            ..Default::default()
        };
        assert!(clipping_lower_bound(&bad_kl, &clip).is_err());
    }

    #[test]
    fn kl_shift_is_linear() {
        let cfg = BoundConfig::clipping(15.0, 3.0, 0.2, 40, 20, 10);
        let base = BoundInputs {
            empirical_multitask_reward: 0.6,
            kl_hyper: 2.0,
            expected_task_kl_sum: 30.0,
        };
        let delta = 1.75;
        let shifted = BoundInputs {
            kl_hyper: base.kl_hyper + delta,
            ..base
        };
        let drop = clipping_lower_bound(&base, &cfg).unwrap()
            - clipping_lower_bound(&shifted, &cfg).unwrap();
        let n: f64 = 40.0;
        let expected = (1.0 / (15.0 * n.sqrt()) + 1.0 / (n * 3.0 * 20f64.sqrt())) * delta;
        assert!((drop - expected).abs() < 1e-14);
    }

    #[test]
    fn breakdown_special_values() {
        let cfg = BoundConfig {
            c_n: 0.123,
            ..BoundConfig::clipping(5.0, 1.0, 0.1, 10, 20, 10).with_delta(1.0)
        };
        let br = penalty_breakdown(&BoundInputs::default(), &cfg).unwrap();
        assert_eq!(br.c_n, 0.123);
        let l1 = 5.0 * 10f64.sqrt();
        let l2 = 20f64.sqrt();
        assert!((br.transfer_confidence - 2f64.ln() / l1).abs() < 1e-15);
        assert!((br.multitask_confidence - 40f64.ln() / (10.0 * l2)).abs() < 1e-15);
    }

    #[test]
    fn penalty_shrinks_with_scale() {
        let penalty = |n: usize, m: usize| {
            let cfg = BoundConfig::clipping(1.0, 1.0, 0.1, n, m, 10);
            -clipping_lower_bound(&BoundInputs::default(), &cfg).unwrap()
        };
        assert!(penalty(10_000, 10_000) < 0.1 * penalty(100, 100));

        let bern = |n: usize, m: usize| {
            let cfg = BoundConfig::bernstein(1.0, 0.001, 0.2, n, m, 10);
            -bernstein_lower_bound(&BoundInputs::default(), &cfg).unwrap()
        };
        assert!(bern(10_000, 10_000) < 0.1 * bern(100, 100));
    }

    fn arb_inputs() -> impl Strategy<Value = BoundInputs> {
        (-1.0f64..2.0, 0.0f64..50.0, 0.0f64..500.0).prop_map(|(r, h, t)| BoundInputs {
            empirical_multitask_reward: r,
            kl_hyper: h,
            expected_task_kl_sum: t,
        })
    }

    fn arb_config() -> impl Strategy<Value = BoundConfig> {
        (
            prop::bool::ANY,
            0.1f64..60.0,
            0.01f64..1.0,
            0.01f64..1.0,
            1usize..500,
            1usize..100,
            2usize..30,
            0.001f64..=1.0,
            0.0f64..0.2,
        )
            .prop_map(|(bern, t1, t2_frac, p, n, m, k, delta, c_n)| {
                let mut cfg = if bern {
                    let t2 = t2_frac * BoundConfig::max_bernstein_t2(p, k, m);
                    BoundConfig::bernstein(t1, t2, p, n, m, k)
                } else {
                    BoundConfig::clipping(t1, t2_frac * 20.0, p, n, m, k)
                };
                cfg.delta = delta;
                cfg.c_n = c_n;
                cfg
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn breakdown_sums_to_bound(inp in arb_inputs(), cfg in arb_config()) {
            let b = lower_bound(&inp, &cfg).unwrap();
            let total = penalty_breakdown(&inp, &cfg).unwrap().total();
            prop_assert!((b - total).abs() <= 1e-12 * b.abs().max(1.0));
        }

        #[test]
        fn monotone_in_every_argument(inp in arb_inputs(), cfg in arb_config(), d in 1e-6f64..1.0) {
            let b = lower_bound(&inp, &cfg).unwrap();
            let up = BoundInputs { empirical_multitask_reward: inp.empirical_multitask_reward + d, ..inp };
            prop_assert!(lower_bound(&up, &cfg).unwrap() > b);
            let kl = BoundInputs { kl_hyper: inp.kl_hyper + d, ..inp };
            prop_assert!(lower_bound(&kl, &cfg).unwrap() < b);
            let tkl = BoundInputs { expected_task_kl_sum: inp.expected_task_kl_sum + d, ..inp };
            prop_assert!(lower_bound(&tkl, &cfg).unwrap() < b);
            let cn = BoundConfig { c_n: cfg.c_n + d, ..cfg.clone() };
            prop_assert!(lower_bound(&inp, &cn).unwrap() < b);
        }
    }
}
