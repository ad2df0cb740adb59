mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use svtfair::fairness::{
    certify, check_theorem_41, check_theorem_43, if_ratio, incoherence_parameter, k2_bound,
    k2_chain_bound, k2_constant, pairwise_ratio_sample, LinearProbe, THEOREM_TOL,
};
use svtfair::{svt, DenseMatrix, Error, GroundTruthMatrix, LqNorm, ObservationMatrix, ShrinkageFn};

#[test]
fn k2_two_by_two_by_hand() {
    let (a, b, sigma) = (0.3f64, 1.1f64, 0.9f64);
    let u = [a.cos(), a.sin()];
    let v = [b.cos(), b.sin()];
    let z = DenseMatrix::from_fn(2, 2, |i, j| sigma * u[i] * v[j]);
    let obs = ObservationMatrix::fully_observed(z).unwrap();
    let est = svt(&obs, 0.5, ShrinkageFn::Identity, false).unwrap();
    assert_eq!(est.rank_kept(), 1);

    let max_uv = [u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1]]
        .iter()
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    let col_l1 = |k: usize| sigma * v[k].abs() * (u[0].abs() + u[1].abs());
    let expected = max_uv / sigma * 2f64.sqrt() * col_l1(0).max(col_l1(1));
    assert_abs_diff_eq!(k2_constant(&obs, &est).unwrap(), expected, epsilon = 1e-12);
}

#[test]
fn k2_of_empty_kept_set_is_zero() {
    let obs = ObservationMatrix::fully_observed(DenseMatrix::from_fn(3, 3, |i, j| 0.1 * (i + j) as f64)).unwrap();
    let est = svt(&obs, 100.0, ShrinkageFn::Identity, false).unwrap();
    assert_eq!(k2_constant(&obs, &est).unwrap(), 0.0);
    assert!(matches!(incoherence_parameter(&est), Err(Error::NoKeptComponents)));
}

#[test]
fn k2_bound_arithmetic() {
    assert_abs_diff_eq!(k2_bound(1.0, 10, 200, 17.9332).unwrap(), 2.4937, epsilon = 1e-4);
    assert_eq!(k2_bound(1.0, 1, 1, 1.0).unwrap(), 1.0);
    assert_eq!(k2_bound(2.0, 3, 7, 1.5).unwrap(), 2.0 * k2_bound(1.0, 3, 7, 1.5).unwrap());
    assert!(matches!(k2_bound(1.0, 1, 1, 0.0), Err(Error::ZeroThreshold)));
}

#[test]
fn incoherence_extremes() {
    let (m, n) = (6, 9);
    let flat = ObservationMatrix::fully_observed(DenseMatrix::from_fn(m, n, |_, _| 0.5)).unwrap();
    let est = svt(&flat, 0.1, ShrinkageFn::Identity, false).unwrap();
    assert_abs_diff_eq!(incoherence_parameter(&est).unwrap(), 1.0, epsilon = 1e-10);
    let cert = certify(&flat, &est).unwrap();
    assert_eq!(cert.incoherence_premise, Some(true));
    assert_eq!(cert.bound_holds, Some(true));

    let spike = DenseMatrix::from_fn(m, n, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 });
    let spike = ObservationMatrix::fully_observed(spike).unwrap();
    let est = svt(&spike, 0.1, ShrinkageFn::Identity, false).unwrap();
    assert_abs_diff_eq!(incoherence_parameter(&est).unwrap(), (m * n) as f64, epsilon = 1e-9);
    let cert = certify(&spike, &est).unwrap();
    assert_eq!(cert.incoherence_premise, Some(false));
    assert_eq!(cert.bound_holds, None);
}

#[test]
fn incoherence_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let z = common::random_matrix(&mut rng, 10, 10);
        let obs = ObservationMatrix::fully_observed(z).unwrap();
        let tau = rng.random_range(0.5..2.0);
        let est = svt(&obs, tau, ShrinkageFn::Identity, false).unwrap();
        if est.kept_set.is_empty() {
            continue;
        }
        let dec = &est.decomposition;
        let mut peak = 0.0f64;
        for i in 0..10 {
            for j in 0..10 {
                let mut s = 0.0;
                for &l in &est.kept_set {
                    s += dec.left_vector(l)[i] * dec.right_vector(l)[j];
                }
                peak = peak.max(s.abs());
            }
        }
        let brute = peak * peak * 100.0 / est.rank_kept() as f64;
        assert_abs_diff_eq!(incoherence_parameter(&est).unwrap(), brute, epsilon = 1e-10);
    }
}

#[test]
fn if_on_z_inequality_family() {
    for seed in 0..50 {
        let inst = common::theorem_instance(seed);
        let probe = LinearProbe::random(inst.obs.cols(), seed);
        let check = check_theorem_41(&inst.obs, &inst.est, &probe, THEOREM_TOL).unwrap();
        assert!(check.holds(), "seed {seed}: {:?}", check.violations.first());
        let m = inst.obs.rows();
        assert_eq!(check.pairs_checked, m * (m - 1));
    }
}

#[test]
fn if_on_a_inequality_family() {
    for seed in 0..50 {
        let inst = common::theorem_instance(seed);
        let n = inst.obs.cols();
        let truth = &inst.truth;
        let probe = LinearProbe::random(n, seed);
        for a_hat in [&inst.est.a_hat, &inst.est.a_hat_unclipped] {
            let pred = probe.apply(a_hat).unwrap();
            for q in [LqNorm::L1, LqNorm::L2] {
                let check = check_theorem_43(truth, a_hat, &pred, probe.lipschitz(), q, THEOREM_TOL).unwrap();
                assert!(check.holds(), "seed {seed}: {:?}", check.violations.first());
            }
        }
    }
}

#[test]
fn theorem_checks_degenerate_cases() {
    let rows = [[0.2, -0.4, 0.1], [0.2, -0.4, 0.1], [0.9, 0.3, -0.5]];
    let obs = ObservationMatrix::fully_observed(DenseMatrix::from_rows(&rows).unwrap()).unwrap();
    let probe = LinearProbe::new(vec![1.0, 2.0, -1.0]).unwrap();
    let est = svt(&obs, 0.2, ShrinkageFn::linear(1.5).unwrap(), false).unwrap();
    let check = check_theorem_41(&obs, &est, &probe, THEOREM_TOL).unwrap();
    assert!(check.holds());

    let empty = svt(&obs, 50.0, ShrinkageFn::Identity, false).unwrap();
    let check = check_theorem_41(&obs, &empty, &probe, THEOREM_TOL).unwrap();
    assert!(check.holds());
    assert!(check.max_excess <= 0.0);

    let truth = GroundTruthMatrix::new(obs.dense().clone()).unwrap();
    let pred = probe.apply(truth.matrix()).unwrap();
    assert!(check_theorem_43(&truth, truth.matrix(), &pred, 1.0, LqNorm::L2, THEOREM_TOL).unwrap().holds());
    let constant = DenseMatrix::from_fn(3, 4, |_, _| 0.3);
    let check = check_theorem_43(&truth, &est.a_hat, &constant, 1.0, LqNorm::L1, THEOREM_TOL).unwrap();
    assert!(check.holds());
}

#[test]
fn a_violating_map_is_reported() {
    let truth = GroundTruthMatrix::new(DenseMatrix::from_rows(&[[0.0, 0.0], [0.1, 0.0]]).unwrap()).unwrap();
    // a 10-Lipschitz map checked against K₁ = 1
    let pred = DenseMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
    let check = check_theorem_43(&truth, truth.matrix(), &pred, 1.0, LqNorm::L2, THEOREM_TOL).unwrap();
    assert_eq!(check.violations.len(), 2);
    assert!(check.max_excess > 0.8);
}

/// Replacing each 1/σ_ℓ by 1/τ is only an entrywise bound when a single
/// component is kept; with several, signs can cancel in Σ u vᵀ but not in
/// Σ u vᵀ / σ. Values cross-checked against numpy.
#[test]
fn chain_step_fails_with_several_components() {
    let inst = common::theorem_instance(3804929106639871652);
    assert_eq!(inst.est.rank_kept(), 4);
    let k2 = k2_constant(&inst.obs, &inst.est).unwrap();
    let chain = k2_chain_bound(&inst.obs, &inst.est).unwrap();
    assert_abs_diff_eq!(k2, 24.456762977, epsilon = 1e-6);
    assert_abs_diff_eq!(chain, 22.519829147, epsilon = 1e-6);
}

#[test]
fn if_ratio_examples() {
    let reference = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]]).unwrap();
    let constant = DenseMatrix::from_fn(3, 5, |_, j| j as f64);
    assert_eq!(if_ratio(&constant, &reference, LqNorm::L1).unwrap().value, 0.0);
    let same = if_ratio(&reference, &reference, LqNorm::L2).unwrap();
    assert_abs_diff_eq!(same.value, 1.0, epsilon = 1e-15);
    assert_eq!(same.pairs_used, 6);

    let dup = DenseMatrix::from_rows(&[[0.0, 1.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
    let r = if_ratio(&dup, &dup, LqNorm::L1).unwrap();
    assert_eq!(r.pairs_skipped_zero_denominator, 2);
    assert_eq!(r.pairs_used, 4);
    let flat = DenseMatrix::zeros(3, 2);
    assert!(matches!(if_ratio(&flat, &flat, LqNorm::L1), Err(Error::DegenerateReference)));
}

#[test]
fn pair_sampling() {
    let pred = DenseMatrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
    let reference = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
    let one = pairwise_ratio_sample(&pred, &reference, LqNorm::L1, 1, 0).unwrap();
    assert_eq!(one, vec![if_ratio(&pred, &reference, LqNorm::L1).unwrap().value]);
    assert!(pairwise_ratio_sample(&pred, &reference, LqNorm::L1, 0, 0).is_err());
    assert!(matches!(
        pairwise_ratio_sample(&pred, &reference, LqNorm::L1, 2, 0),
        Err(Error::Validation(_))
    ));
    // only two of the three pairs have a nonzero denominator
    let dup = DenseMatrix::from_rows(&[[0.0, 1.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
    assert!(matches!(
        pairwise_ratio_sample(&dup, &dup, LqNorm::L1, 3, 0),
        Err(Error::RetriesExhausted { .. })
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let reference = common::random_matrix(&mut rng, 30, 4);
    let constant = DenseMatrix::from_fn(30, 3, |_, _| 0.7);
    let zeros = pairwise_ratio_sample(&constant, &reference, LqNorm::L1, 100, 4).unwrap();
    assert_eq!(zeros.len(), 100);
    assert!(zeros.iter().all(|&r| r == 0.0));
    let pred = common::random_matrix(&mut rng, 30, 3);
    assert_eq!(
        pairwise_ratio_sample(&pred, &reference, LqNorm::L2, 50, 9).unwrap(),
        pairwise_ratio_sample(&pred, &reference, LqNorm::L2, 50, 9).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_inequality_with_one_component(seed in any::<u64>()) {
        let inst = common::theorem_instance(seed);
        let s = inst.est.decomposition.singular_values();
        prop_assume!(s.len() > 1 && s[0] > s[1]);
        let est = svt(&inst.obs, s[1], ShrinkageFn::linear(inst.beta).unwrap(), false).unwrap();
        prop_assert_eq!(est.rank_kept(), 1);
        let k2 = k2_constant(&inst.obs, &est).unwrap();
        let chain = k2_chain_bound(&inst.obs, &est).unwrap();
        prop_assert!(k2 <= chain + 1e-10, "k2 {k2} chain {chain}");
    }

    #[test]
    fn if_ratio_scales_with_predictions(seed in any::<u64>(), c in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = common::random_matrix(&mut rng, 8, 5);
        let reference = common::random_matrix(&mut rng, 8, 6);
        let base = if_ratio(&pred, &reference, LqNorm::L1).unwrap().value;
        let scaled = if_ratio(&pred.scale(c), &reference, LqNorm::L1).unwrap().value;
        prop_assert!((scaled - c * base).abs() <= 1e-12 * (1.0 + c * base));
    }

    #[test]
    fn if_ratio_ignores_row_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = common::random_matrix(&mut rng, 9, 4);
        let reference = common::random_matrix(&mut rng, 9, 3);
        let mut perm: Vec<usize> = (0..9).collect();
        for i in (1..9).rev() { perm.swap(i, rng.random_range(0..=i)); }
        let a = if_ratio(&pred, &reference, LqNorm::L2).unwrap().value;
        let b = if_ratio(&pred.select_rows(&perm).unwrap(), &reference.select_rows(&perm).unwrap(), LqNorm::L2).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }
}
