use balalloc::analysis::{
    baseline_tail, fuzz_beta, fuzz_tail, fuzz_tail_recurrence, priority_tail, TailDistribution,
    DEFAULT_EPSILON,
};
use balalloc::engine::{run_replicate, Simulation};
use balalloc::model::{Priority, QueueState, RngStream, SimConfig};
use balalloc::scheduler::{fuzzy_select, select_queue, DepthView, StrategyKind};
use proptest::prelude::*;

fn well_formed(t: &TailDistribution) -> Result<(), TestCaseError> {
    prop_assert_eq!(t.s[0], 1.0);
    for w in t.s.windows(2) {
        prop_assert!(w[1] <= w[0], "not non-increasing: {} then {}", w[0], w[1]);
    }
    prop_assert!(t.s.iter().all(|v| (0.0..=1.0).contains(v)));
    prop_assert!(t.expected_depth.is_finite());
    Ok(())
}

proptest! {
    #[test]
    fn baseline_tails_are_well_formed(lambda in 0.01f64..0.99, d in 1usize..6) {
        well_formed(&baseline_tail(lambda, d, DEFAULT_EPSILON).unwrap())?;
    }

    #[test]
    fn d1_tail_is_geometric(lambda in 0.01f64..0.97) {
        let t = baseline_tail(lambda, 1, DEFAULT_EPSILON).unwrap();
        prop_assert!((t.expected_depth - lambda / (1.0 - lambda)).abs() < 1e-9 * (1.0 + lambda / (1.0 - lambda)));
        for (i, &v) in t.s.iter().enumerate() {
            let want = lambda.powi(i as i32);
            prop_assert!((v - want).abs() <= 1e-12 * want.max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn fuzz_tails_are_well_formed(lambda in 0.01f64..0.99, d in 2usize..6, b in 1u32..12) {
        well_formed(&fuzz_tail(lambda, d, b, DEFAULT_EPSILON).unwrap())?;
        well_formed(&fuzz_tail_recurrence(lambda, d, b, DEFAULT_EPSILON).unwrap())?;
    }

    #[test]
    fn fuzz_forms_agree_up_to_knee(lambda in 0.01f64..0.99, d in 2usize..6, b in 1u32..12) {
        let closed = fuzz_tail(lambda, d, b, DEFAULT_EPSILON).unwrap();
        let rec = fuzz_tail_recurrence(lambda, d, b, DEFAULT_EPSILON).unwrap();
        for i in 0..=(b as usize + 1) {
            let (x, y) = (closed.at(i), rec.at(i));
            prop_assert!((x - y).abs() <= 1e-12 * x.max(y), "i={} {} vs {}", i, x, y);
        }
    }

    #[test]
    fn zero_fuzz_recurrence_is_baseline(lambda in 0.01f64..0.99, d in 1usize..6) {
        let base = baseline_tail(lambda, d, DEFAULT_EPSILON).unwrap();
        let rec = fuzz_tail_recurrence(lambda, d, 0, DEFAULT_EPSILON).unwrap();
        for i in 0..base.s.len().max(rec.s.len()) {
            prop_assert!((base.at(i) - rec.at(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_solves_polynomial(b in 1u32..40, d in 2usize..10) {
        let r = fuzz_beta(b, d).unwrap();
        prop_assert!(r > 1.0);
        let residual = r.powi(b as i32 + 1) - r.powi(b as i32) - (d as f64 - 1.0);
        prop_assert!(residual.abs() < 1e-10, "residual {}", residual);
    }

    #[test]
    fn beta_monotone(b in 1u32..30, d in 2usize..9) {
        let r = fuzz_beta(b, d).unwrap();
        prop_assert!(fuzz_beta(b + 1, d).unwrap() < r);
        prop_assert!(fuzz_beta(b, d + 1).unwrap() > r);
    }

    #[test]
    fn top_class_ignores_lower_rates(
        l0 in 0.05f64..0.3, l1 in 0.01f64..0.3, l2 in 0.01f64..0.3,
        m1 in 0.01f64..0.3, m2 in 0.01f64..0.3, d in 1usize..5,
    ) {
        let a = priority_tail(&[l0, l1, l2], &[d; 3], 0, DEFAULT_EPSILON).unwrap();
        let b = priority_tail(&[l0, m1, m2], &[d; 3], 0, DEFAULT_EPSILON).unwrap();
        prop_assert_eq!(a.s, b.s);
    }

    #[test]
    fn cumulative_to_lowest_is_total(counts in prop::array::uniform3(0u32..1000)) {
        let q = QueueState::from_counts(counts);
        prop_assert_eq!(q.cumulative(Priority::new(2).unwrap()), q.total());
        prop_assert_eq!(q.total(), counts.iter().sum::<u32>());
    }

    #[test]
    fn exact_select_hits_minimum(keys in prop::collection::vec(0u32..20, 1..9), seed in any::<u64>()) {
        let values: Vec<(usize, u32)> = keys.iter().copied().enumerate().collect();
        let mut rng = RngStream::new(seed, 0);
        let pick = fuzzy_select(&values, 0, &mut rng).unwrap();
        prop_assert_eq!(keys[pick], *keys.iter().min().unwrap());
    }

    #[test]
    fn fuzzy_select_stays_in_band(
        keys in prop::collection::vec(0u32..30, 1..9), b in 0u32..6, seed in any::<u64>(),
    ) {
        let values: Vec<(usize, u32)> = keys.iter().copied().enumerate().collect();
        let mut rng = RngStream::new(seed, 0);
        let pick = fuzzy_select(&values, b, &mut rng).unwrap();
        prop_assert!(keys[pick] <= keys.iter().min().unwrap() + b);
    }

    #[test]
    fn strategies_coincide_with_one_level(
        depths in prop::collection::vec(0u32..6, 1..40),
        d in 1usize..5, fuzz in 0u32..3, seed in any::<u64>(),
    ) {
        let queues: Vec<QueueState> = depths.iter().map(|&c| QueueState::from_counts([c, 0, 0])).collect();
        let view = DepthView::live(&queues, 1, 0);
        let mut picks = Vec::new();
        for strategy in StrategyKind::ALL {
            let mut rng = RngStream::new(seed, 1);
            let mut chosen = Vec::new();
            for _ in 0..20 {
                let probes = balalloc::scheduler::probe(&mut rng, queues.len(), d).unwrap();
                chosen.push(select_queue(&view, &probes, strategy, Priority::HIGHEST, fuzz, &mut rng).unwrap());
            }
            picks.push(chosen);
        }
        prop_assert!(picks.windows(2).all(|w| w[0] == w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_conserve_jobs_and_histograms(
        n in 1usize..60, d in 1usize..5, lambda in 0.1f64..0.95, bursts in 0usize..3,
        levels in 1usize..4, lag_steps in 0u64..3, fuzz in 0u32..3, seed in any::<u64>(),
    ) {
        let config = SimConfig {
            n, d, lambda, seed, fuzz,
            total_jumps: 40_000,
            burst_count: bursts,
            snapshot_interval: 500,
            lag: lag_steps * 500,
            priority_mix: vec![1.0 / levels as f64; levels],
            strategy: StrategyKind::MineThenTotal,
            ..SimConfig::default()
        };
        let r = run_replicate(&config, 0).unwrap();
        let drained = r.arrivals - r.departures;
        prop_assert_eq!(r.final_measurement().total_jobs, drained);
        for m in &r.measurements {
            prop_assert_eq!(m.tail_histogram[0] as usize, n);
            let exact = |i: usize| m.tail_histogram[i] - m.tail_histogram.get(i + 1).copied().unwrap_or(0);
            let weighted: u64 = (0..m.tail_histogram.len()).map(|i| i as u64 * exact(i) as u64).sum();
            prop_assert_eq!(weighted, m.total_jobs);
            prop_assert!((m.avg_depth - weighted as f64 / n as f64).abs() < 1e-12);
            let per_level: f64 = m.avg_depth_by_priority.iter().sum();
            prop_assert!((per_level - m.avg_depth).abs() < 1e-9);
        }
    }

    #[test]
    fn runs_are_reproducible(d in 1usize..4, seed in any::<u64>(), replicate in 0u64..4) {
        let config = SimConfig { n: 30, d, seed, total_jumps: 20_000, burst_count: 1, ..SimConfig::default() };
        let a = run_replicate(&config, replicate).unwrap();
        let b = run_replicate(&config, replicate).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stepping_matches_run(seed in any::<u64>()) {
        let config = SimConfig { n: 20, d: 2, seed, total_jumps: 5_000, ..SimConfig::default() };
        let mut sim = Simulation::new(config.clone(), 0).unwrap();
        while sim.jump() < config.total_jumps {
            sim.step();
        }
        let r = run_replicate(&config, 0).unwrap();
        prop_assert_eq!(sim.measure(), r.final_measurement().clone());
    }
}
