use proptest::prelude::*;

use prefbai::divergence::bern_kl;
use prefbai::estimation::{project_estimator, reg_mle};
use prefbai::instances::all_pairs;
use prefbai::unstructured::{characteristic_time, optimal_allocation};
use prefbai::{PairIndex, PreferenceInstance, RngState, StructuredModel, TrialLedger};

fn bt_model(theta: Vec<f64>, features: Vec<Vec<f64>>) -> StructuredModel {
    let n = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    let spread = prefbai::instances::max_pair_distance(&features);
    StructuredModel::new(theta, features, n + 1.0, spread.max(1e-9)).unwrap()
}

fn scores_instance(scores: &[f64]) -> PreferenceInstance {
    let k = scores.len();
    let upper: Vec<f64> = all_pairs(k)
        .into_iter()
        .map(|p| prefbai::divergence::logistic(scores[p.i] - scores[p.j]))
        .collect();
    PreferenceInstance::from_upper(k, &upper).unwrap()
}

fn distinct(v: &[f64], gap: f64) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[1] - w[0] > gap)
}

proptest! {
    #[test]
    fn kl_is_nonnegative_and_zero_only_on_the_diagonal(x in 0.001f64..0.999, y in 0.001f64..0.999) {
        let d = bern_kl(x, y);
        prop_assert!(d >= 0.0);
        if (x - y).abs() > 1e-6 {
            prop_assert!(d > 0.0);
        }
        prop_assert!(bern_kl(x, x).abs() < 1e-15);
    }

    #[test]
    fn kl_to_half_is_symmetric(x in 0.0f64..=1.0) {
        prop_assert!((bern_kl(x, 0.5) - bern_kl(1.0 - x, 0.5)).abs() < 1e-12);
    }

    #[test]
    fn bt_best_policy_is_the_score_argmax(
        theta in prop::collection::vec(-1.0f64..1.0, 3),
        features in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 2..7),
    ) {
        let model = bt_model(theta, features);
        let scores = model.scores();
        prop_assume!(distinct(&scores, 1e-9));
        let argmax = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        let mu = model.to_preferences();
        prop_assert_eq!(mu.best_policy(), argmax);
        prop_assert_eq!(mu.validate().unique_best(), Some(argmax));
        for p in all_pairs(mu.k()) {
            prop_assert!((mu.mu(p.i, p.j) + mu.mu(p.j, p.i) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn optimal_allocation_is_sparse_and_on_the_simplex(scores in prop::collection::vec(-2.0f64..2.0, 2..9)) {
        prop_assume!(distinct(&scores, 1e-3));
        let mu = scores_instance(&scores);
        let alloc = optimal_allocation(&mu).unwrap();
        let sum: f64 = alloc.weights().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(alloc.weights().iter().all(|&w| w >= 0.0));
        prop_assert!(alloc.nonzeros() < mu.k());
    }

    #[test]
    fn characteristic_time_ignores_labels(scores in prop::collection::vec(-2.0f64..2.0, 3..7), seed in 0u64..1000) {
        prop_assume!(distinct(&scores, 1e-3));
        let mut shuffled = scores.clone();
        let mut rng = RngState::from_seed(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.index(i + 1));
        }
        let a = characteristic_time(&scores_instance(&scores)).unwrap();
        let b = characteristic_time(&scores_instance(&shuffled)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn projected_estimate_stays_in_the_ball(
        seed in 0u64..500,
        n in 1usize..60,
        bound in 0.05f64..2.0,
    ) {
        let mut rng = RngState::from_seed(seed);
        let features: Vec<Vec<f64>> = (0..4).map(|_| (0..2).map(|_| 2.0 * rng.gaussian()).collect()).collect();
        let mut ledger = TrialLedger::with_features(&features);
        for _ in 0..n {
            let a = rng.index(4);
            let b = (a + 1 + rng.index(3)) % 4;
            ledger.record(PairIndex::new(a, b), rng.bernoulli(0.8));
        }
        let zeta = reg_mle(&ledger, 0.1, None).unwrap();
        let theta = project_estimator(&zeta, &ledger, 0.1, bound).unwrap();
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        prop_assert!(norm <= bound + 1e-12);
    }

    #[test]
    fn ledger_counts_match_records(outcomes in prop::collection::vec((0usize..5, 0usize..4, any::<bool>()), 0..200)) {
        let mut ledger = TrialLedger::new(5);
        for &(a, off, won) in &outcomes {
            let b = (a + 1 + off) % 5;
            ledger.record(PairIndex::new(a, b), won);
        }
        prop_assert_eq!(ledger.total() as usize, outcomes.len());
        prop_assert_eq!(ledger.counts().iter().sum::<u64>() as usize, outcomes.len());
        prop_assert_eq!(ledger.records().len(), outcomes.len());
        for (n, w) in ledger.counts().iter().zip(ledger.win_counts()) {
            prop_assert!(w <= n);
        }
    }
}
