mod common;

use proptest::prelude::*;
use sosrec::recovery::{sample_random_function_set, GeneratorConfig};
use sosrec::rng::rng_from_seed;
use sosrec::sos::{
    build_equal_impact_f, estimate_recovery_curve_mc, exact_recovery_curve_independent,
    simulate_realization_clocks,
};
use sosrec::{FunctionalityVector, InitialStateVector, RecoveryFunction, RecoveryFunctionSet, StateSpace, TimeGrid};

use common::{fraction_up, subset_expectation};

fn disparate_set(n: usize, seed: u64) -> RecoveryFunctionSet {
    let cfg = GeneratorConfig {
        identical: false,
        ..GeneratorConfig::default()
    };
    sample_random_function_set(&cfg, n, &mut rng_from_seed(seed)).unwrap()
}

#[test]
fn exact_curve_matches_subset_enumeration() {
    let set = disparate_set(3, 5);
    let space = StateSpace::new(3).unwrap();
    // arbitrary, non-additive functionality
    let f_vals: Vec<f64> = (0..8).map(|s| ((s * 37 % 11) as f64) / 10.0).collect();
    let f = FunctionalityVector::new(f_vals.clone()).unwrap();
    let grid = TimeGrid::uniform(6.0, 31).unwrap();
    let exact = exact_recovery_curve_independent(&set, &space, &f, &grid).unwrap();
    for (&t, &v) in grid.times().iter().zip(&exact.values) {
        let phi: Vec<f64> = set.functions().iter().map(|g| g.cdf(t)).collect();
        let oracle = subset_expectation(&phi, |mask| f_vals[space.index_of_mask(mask)]);
        assert!((v - oracle).abs() < 1e-14);
    }
}

#[test]
fn mc_agrees_with_subset_enumeration() {
    let space = StateSpace::new(4).unwrap();
    let f = build_equal_impact_f(&space);
    let init = InitialStateVector::all_down(16);
    let grid = TimeGrid::uniform(8.0, 41).unwrap();
    let n = 20_000;
    for seed in 0..3 {
        let set = disparate_set(4, seed);
        let mc = estimate_recovery_curve_mc(&set, &space, &f, &init, &grid, n, seed).unwrap();
        let se = mc.stderr.unwrap();
        for (k, &t) in grid.times().iter().enumerate() {
            let phi: Vec<f64> = set.functions().iter().map(|g| g.cdf(t)).collect();
            let oracle = subset_expectation(&phi, fraction_up(4));
            let tol = 4.0 * se[k].max(1.0 / n as f64);
            assert!((mc.values[k] - oracle).abs() <= tol, "seed {seed}, t = {t}");
        }
    }
}

#[test]
fn mc_is_independent_of_thread_count() {
    let set = disparate_set(4, 9);
    let space = StateSpace::new(4).unwrap();
    let f = build_equal_impact_f(&space);
    let init = InitialStateVector::all_down(16);
    let grid = TimeGrid::uniform(5.0, 21).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_recovery_curve_mc(&set, &space, &f, &init, &grid, 3000, 77).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn identical_exponential_systems() {
    // equal impact makes the curve the mean recovery function: 1 - e^{-t}
    let set = RecoveryFunctionSet::identical(RecoveryFunction::exponential(1.0).unwrap(), 4).unwrap();
    let space = StateSpace::new(4).unwrap();
    let f = build_equal_impact_f(&space);
    let grid = TimeGrid::uniform(3.0, 4).unwrap();
    let exact = exact_recovery_curve_independent(&set, &space, &f, &grid).unwrap();
    for (&t, &v) in grid.times().iter().zip(&exact.values) {
        assert!((v - (1.0 - (-t).exp())).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn curves_are_monotone(seed in any::<u64>(), n in 1usize..5) {
        let set = disparate_set(n, seed);
        let space = StateSpace::new(n).unwrap();
        let f = build_equal_impact_f(&space);
        let init = InitialStateVector::all_down(space.n_states());
        let grid = TimeGrid::uniform(6.0, 25).unwrap();
        let exact = exact_recovery_curve_independent(&set, &space, &f, &grid).unwrap();
        let mc = estimate_recovery_curve_mc(&set, &space, &f, &init, &grid, 200, seed).unwrap();
        for c in [&exact.values, &mc.values] {
            prop_assert_eq!(c[0], 0.0);
            for w in c.windows(2) {
                prop_assert!(w[0] <= w[1] + 1e-15);
            }
        }
    }

    #[test]
    fn realizations_visit_growing_subsets(seed in any::<u64>()) {
        let set = disparate_set(4, seed);
        let space = StateSpace::new(4).unwrap();
        let traj = simulate_realization_clocks(&set, &space, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(traj.events.len(), 4);
        let mut prev = space.mask(traj.initial_state);
        let mut prev_t = 0.0;
        for e in &traj.events {
            let m = space.mask(e.state);
            prop_assert_eq!(m & prev, prev);
            prop_assert_eq!((m ^ prev).count_ones(), 1);
            prop_assert!(e.time >= prev_t);
            prev = m;
            prev_t = e.time;
        }
        prop_assert_eq!(traj.events.last().unwrap().state, space.full_state());
    }
}
