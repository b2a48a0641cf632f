use ctxql::agents::{CusumState, SrState};
use ctxql::changepoint::{encode_tuples, CompositionalSample, DetectorConfig};
use ctxql::envs::{generate_random_mdp, ChangepointSchedule};
use ctxql::eval::{detection_stats, precision_recall, regret, PiecewisePolicy};
use ctxql::mdp::{discounted_return, ExperienceTuple};
use ctxql::rng::stream;
use ctxql::Execution;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cusum_counter_matches_clamped_walk(scores in prop::collection::vec(-3.0f64..3.0, 0..200)) {
        let mut state = CusumState::new(u64::MAX, vec![1.0], vec![1.0]).unwrap();
        let mut reference: i64 = 0;
        for l in scores {
            state.push_score(l);
            let step = if l > 0.0 { 1 } else if l < 0.0 { -1 } else { 0 };
            reference = (reference + step).max(0);
            prop_assert_eq!(state.m as i64, reference);
        }
    }

    #[test]
    fn sr_recursion_equals_sum_of_products(ratios in prop::collection::vec(0.2f64..3.0, 1..60)) {
        let mut state = SrState::new(0.0, f64::INFINITY).unwrap();
        for &r in &ratios {
            state.push_ratio(r);
        }
        // SR_t = sum over k of prod_{j >= k} r_j.
        let t = ratios.len();
        let closed: f64 = (0..t).map(|k| ratios[k..].iter().product::<f64>()).sum();
        prop_assert!((state.statistic - closed).abs() <= 1e-9 * closed.max(1.0));
    }

    #[test]
    fn encodings_lie_on_the_simplex(
        steps in prop::collection::vec((0usize..4, 0usize..3, 0usize..4), 40..200),
        window in 5usize..20,
    ) {
        let tuples: Vec<ExperienceTuple> = steps
            .iter()
            .enumerate()
            .map(|(t, &(s, r, s2))| ExperienceTuple { state: s, reward: r as f64, next_state: s2, epoch: t as u64 })
            .collect();
        let config = DetectorConfig { window, stride: window, ..DetectorConfig::default() };
        for sample in encode_tuples(&tuples, 4, &config).unwrap() {
            let v = sample.as_slice();
            prop_assert!(v.iter().all(|&x| x > 0.0));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn normalised_weights_are_compositions(w in prop::collection::vec(1e-6f64..1e3, 1..12)) {
        let s = CompositionalSample::from_weights(w.clone()).unwrap();
        let total: f64 = w.iter().sum();
        for (x, y) in s.as_slice().iter().zip(&w) {
            prop_assert!((x - y / total).abs() < 1e-12);
        }
    }

    #[test]
    fn precision_recall_ignores_a_common_shift(
        detected in prop::collection::vec(0u64..2000, 0..8),
        truth in prop::collection::vec(0u64..2000, 0..5),
        shift in 0u64..10_000,
        window in 1u64..200,
    ) {
        let moved = |v: &[u64]| v.iter().map(|x| x + shift).collect::<Vec<_>>();
        prop_assert_eq!(
            precision_recall(&detected, &truth, window),
            precision_recall(&moved(&detected), &moved(&truth), window)
        );
    }

    #[test]
    fn precision_and_recall_are_rates(
        detected in prop::collection::vec(0u64..500, 0..8),
        truth in prop::collection::vec(0u64..500, 0..5),
        window in 0u64..100,
    ) {
        let (p, r) = precision_recall(&detected, &truth, window);
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
    }

    #[test]
    fn summaries_ignore_run_order(mut values in prop::collection::vec(-1e3f64..1e3, 1..40), seed in any::<u64>()) {
        let before = detection_stats(&values).unwrap();
        let n = values.len();
        values.rotate_left((seed % n as u64) as usize);
        values.reverse();
        let after = detection_stats(&values).unwrap();
        prop_assert!((before.mean - after.mean).abs() < 1e-9);
        prop_assert!((before.sd - after.sd).abs() < 1e-9);
        prop_assert_eq!(before.median, after.median);
    }

    #[test]
    fn discounted_return_is_the_weighted_sum(rewards in prop::collection::vec(-5.0f64..5.0, 0..100), gamma in 0.0f64..0.999) {
        let direct: f64 = rewards.iter().enumerate().map(|(t, r)| gamma.powi(t as i32) * r).sum();
        prop_assert!((discounted_return(rewards.iter().copied(), gamma) - direct).abs() < 1e-9);
    }

    #[test]
    fn generated_rows_are_distributions(seed in any::<u64>(), ns in 2usize..7, na in 2usize..5) {
        let m = generate_random_mdp(ns, na, 0.9, &mut stream(seed, 0)).unwrap();
        for s in 0..ns {
            for a in 0..na {
                prop_assert!((m.row(s, a).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn switching_at_the_truth_is_never_beaten(
        seed in any::<u64>(),
        delay in 0u64..300,
        eps in 0.0f64..0.5,
        wrong in prop::collection::vec(0usize..3, 4),
    ) {
        let mut rng = stream(seed, 0);
        let contexts = vec![
            generate_random_mdp(4, 3, 0.9, &mut rng).unwrap(),
            generate_random_mdp(4, 3, 0.9, &mut rng).unwrap(),
        ];
        let schedule = ChangepointSchedule::new(vec![300], vec![0, 1], 600).unwrap();
        let agent = PiecewisePolicy { policies: vec![wrong.clone(), wrong], switches: vec![300 + delay], epsilon: eps };
        prop_assert!(regret(&contexts, &schedule, &agent, 0).unwrap() >= -1e-6);
    }

    #[test]
    fn execution_modes_agree(n in 0usize..300, salt in any::<u64>()) {
        let f = |i: usize| (i as u64 ^ salt).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        prop_assert_eq!(Execution::Sequential.map(n, f), Execution::Parallel.map(n, f));
    }
}
