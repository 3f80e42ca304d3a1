use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use minvol_nmf::divergences::Beta;
use minvol_nmf::evaluation::{is_separable, match_factors, synth_scattered_instance};
use minvol_nmf::solver::{solve, solve_from, FactorPair, Lambda, SolverConfig, Variant};
use minvol_nmf::stft::NonnegMatrix;

fn random_v(seed: u64, f: usize, n: usize) -> NonnegMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NonnegMatrix::new(Array2::from_shape_simple_fn((f, n), || rng.random_range(0.01..1.0))).unwrap()
}

fn on_simplex(w: &Array2<f64>) -> bool {
    w.columns().into_iter().all(|c| (c.sum() - 1.0).abs() < 1e-10) && w.iter().all(|&x| x > 0.0)
}

#[test]
fn itakura_saito_recovers_synthetic_factors() {
    let mut hits = 0;
    for seed in 0..5 {
        let inst = synth_scattered_instance(40, 60, 4, seed, 0.0).unwrap();
        assert!(is_separable(&inst.h_true));
        let cfg = SolverConfig::new(4)
            .with_beta(Beta::ITAKURA_SAITO)
            .with_lambda(Lambda::Fixed(0.1))
            .with_max_iters(500)
            .with_seed(seed);
        let (fp, trace) = solve(&inst.v, &cfg).unwrap();
        assert!(trace.is_non_increasing(1e-9));
        hits += usize::from(match_factors(&fp.w, &inst.w_true).unwrap().relative_error < 5e-2);
    }
    assert!(hits >= 4, "{hits}/5");
}

#[test]
fn minvol_stays_at_the_truth_when_started_there() {
    let inst = synth_scattered_instance(40, 60, 4, 1, 0.0).unwrap();
    let truth = FactorPair { w: inst.w_true.clone(), h: inst.h_true.mapv(|x| x.max(1e-16)) };
    let cfg = SolverConfig::new(4).with_lambda(Lambda::Fixed(0.01)).with_max_iters(200);
    let (fp, _) = solve_from(&inst.v, &cfg, &truth).unwrap();
    assert!(match_factors(&fp.w, &inst.w_true).unwrap().relative_error < 1e-3);
}

#[test]
fn noisy_instances_still_decrease() {
    let inst = synth_scattered_instance(30, 40, 3, 4, 0.05).unwrap();
    for variant in [Variant::MinVol, Variant::Sparse] {
        let cfg = SolverConfig::new(3).with_variant(variant).with_sparse_weight(0.2).with_max_iters(150);
        let (fp, trace) = solve(&inst.v, &cfg).unwrap();
        assert!(trace.is_non_increasing(1e-9), "{variant:?}");
        assert!(on_simplex(&fp.w));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_variant_returns_simplex_dictionary(
        seed in 0u64..1000,
        k in 1usize..5,
        beta in prop_oneof![Just(Beta::ITAKURA_SAITO), Just(Beta::KULLBACK_LEIBLER)],
        variant in prop_oneof![Just(Variant::MinVol), Just(Variant::Baseline)],
    ) {
        let v = random_v(seed, 12, 10);
        let cfg = SolverConfig::new(k).with_beta(beta).with_variant(variant).with_seed(seed).with_max_iters(30);
        let (fp, trace) = solve(&v, &cfg).unwrap();
        prop_assert!(on_simplex(&fp.w));
        prop_assert!(fp.h.iter().all(|&x| x >= 0.0 && x.is_finite()));
        prop_assert_eq!(trace.records.len(), 30);
        if variant == Variant::MinVol {
            prop_assert!(trace.is_non_increasing(1e-9));
        }
    }

    #[test]
    fn minvol_objective_is_monotone_for_any_lambda(seed in 0u64..1000, lambda in 1e-3f64..10.0, delta in 0.1f64..2.0) {
        let v = random_v(seed, 15, 12);
        let cfg = SolverConfig::new(3).with_lambda(Lambda::Fixed(lambda)).with_delta(delta).with_seed(seed).with_max_iters(40);
        let (_, trace) = solve(&v, &cfg).unwrap();
        prop_assert!(trace.is_non_increasing(1e-9), "max increase {}", trace.max_increase());
    }
}
