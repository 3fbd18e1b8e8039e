mod common;

use common::base_objective;
use lifelong_bandit::base_learner::{objective_value, posterior};
use lifelong_bandit::estimators::SufficientStats;
use lifelong_bandit::math::ActionDistribution;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng) -> (SufficientStats, ActionDistribution, usize) {
    let k = rng.random_range(2..=6);
    let m = rng.random_range(1..=40);
    let mut stats = SufficientStats::new(k);
    for _ in 0..rng.random_range(0..=m) {
        stats.record(rng.random_range(0..k), if rng.random_bool(0.6) { 1.0 } else { 0.0 });
    }
    let masses: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
    (stats, ActionDistribution::from_unnormalized(masses).unwrap(), m)
}

#[test]
fn closed_form_beats_local_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (stats, prior, m) = random_instance(&mut rng);
        let q = posterior(&stats, &prior, m).unwrap();
        let means = stats.mean_rewards();
        let best = base_objective(q.probs(), &means, prior.probs(), m);
        for _ in 0..500 {
            let cand: Vec<f64> = q.probs().iter().map(|x| x * (1.0 + rng.random_range(-0.01..0.01))).collect();
            let cand = ActionDistribution::from_unnormalized(cand).unwrap();
            assert!(best - base_objective(cand.probs(), &means, prior.probs(), m) >= -1e-12);
        }
    }
}

#[test]
fn library_objective_agrees_with_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let (stats, prior, m) = random_instance(&mut rng);
        let masses: Vec<f64> = (0..prior.num_actions()).map(|_| rng.random_range(0.0..1.0)).collect();
        let q = ActionDistribution::from_unnormalized(masses).unwrap();
        let lib = objective_value(&q, &stats, &prior, m).unwrap();
        let oracle = base_objective(q.probs(), &stats.mean_rewards(), prior.probs(), m);
        assert!((lib - oracle).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn posterior_is_a_distribution_on_prior_support(
        seed in 0u64..10_000,
        zero in 0usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (stats, prior, m) = random_instance(&mut rng);
        let k = prior.num_actions();
        let mut masses = prior.probs().to_vec();
        masses[zero % k] = 0.0;
        let prior = ActionDistribution::from_unnormalized(masses).unwrap();
        let q = posterior(&stats, &prior, m).unwrap();
        prop_assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(q.prob(zero % k), 0.0);
    }
}
