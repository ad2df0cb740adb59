mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use svtfair::datagen::{gen_ground_truth, mask_uniform, SynthConfig};
use svtfair::predictors::knn::{adjusted_cosine_similarity, knn_predict, knn_predict_all, KnnConfig};
use svtfair::predictors::mlp::{
    gradient_check, load_checkpoint, mlp_predict_row, mlp_train, mlp_train_observed, save_checkpoint,
    MlpModel, TrainConfig,
};
use svtfair::DenseMatrix;

#[test]
fn knn_duplicate_row_dominates() {
    let b = DenseMatrix::from_rows(&[
        [1.0, 0.0, 0.5],
        [1.0, 0.0, 0.5],
        [0.0, 1.0, 0.0],
        [0.2, 0.8, 1.0],
    ])
    .unwrap();
    assert_abs_diff_eq!(adjusted_cosine_similarity(&b, 0, 1).unwrap(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(adjusted_cosine_similarity(&b, 0, 2).unwrap(), -0.84119102, epsilon = 1e-8);
    assert_abs_diff_eq!(adjusted_cosine_similarity(&b, 0, 3).unwrap(), -0.70352647, epsilon = 1e-8);
    // (1·r1 − 0.8412·r2 − 0.7035·r3) / (1 + 0.8412 + 0.7035), computed in numpy
    let pred = knn_predict(&b, 0, &KnnConfig { k: 3 }).unwrap();
    let expected = [0.33767784, -0.55173598, -0.07997999];
    for (p, e) in pred.iter().zip(expected) {
        assert_abs_diff_eq!(*p, e, epsilon = 1e-8);
    }
}

#[test]
fn knn_two_rows_are_opposite() {
    let b = DenseMatrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap();
    assert_eq!(adjusted_cosine_similarity(&b, 0, 1).unwrap(), -1.0);
}

#[test]
fn knn_ignores_order_of_non_neighbours() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let b = common::random_matrix(&mut rng, 15, 6);
    // make rows 1..=3 near copies of row 0 so they are its neighbours
    let b = DenseMatrix::from_fn(15, 6, |i, j| {
        if (1..=3).contains(&i) { b[(0, j)] + 0.01 * i as f64 * b[(i, j)] } else { b[(i, j)] }
    });
    let cfg = KnnConfig { k: 3 };
    let base = knn_predict(&b, 0, &cfg).unwrap();
    let mut perm: Vec<usize> = (0..15).collect();
    perm[4..].reverse();
    let permuted = b.select_rows(&perm).unwrap();
    let moved = knn_predict(&permuted, 0, &cfg).unwrap();
    for (x, y) in base.iter().zip(&moved) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn similarity_symmetric_and_bounded(seed in any::<u64>(), m in 2usize..12, n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = common::random_matrix(&mut rng, m, n);
        for i in 0..m {
            for j in 0..m {
                let s = adjusted_cosine_similarity(&b, i, j).unwrap();
                prop_assert_eq!(s, adjusted_cosine_similarity(&b, j, i).unwrap());
                prop_assert!(s.abs() <= 1.0 + 1e-12);
            }
        }
    }
}

#[test]
fn knn_all_rows_matches_single_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let b = common::random_matrix(&mut rng, 20, 9);
    let cfg = KnnConfig::default();
    let all = knn_predict_all(&b, &cfg).unwrap();
    for i in [0, 7, 19] {
        let row = knn_predict(&b, i, &cfg).unwrap();
        for (x, y) in all.row(i).iter().zip(&row) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }
}

fn small_cfg(seed: u64) -> TrainConfig {
    TrainConfig { seed, ..TrainConfig::default() }
}

#[test]
fn constant_target_is_learned() {
    let (m, n) = (30, 40);
    let b = DenseMatrix::zeros(m, n);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mask: Vec<bool> = (0..m * n).map(|_| rng.random_bool(0.6)).collect();
    let (model, _) = mlp_train(&b, &mask, &small_cfg(1)).unwrap();
    let held_out: Vec<(usize, usize)> = (0..m * n)
        .filter(|&c| !mask[c])
        .map(|c| (c / n, c % n))
        .collect();
    for h in model.predict_cells(&b, &held_out).unwrap() {
        assert!((h - 0.5).abs() < 0.05, "{h}");
    }
}

#[test]
fn training_reduces_loss() {
    let mut initial = 0.0;
    let mut last = 0.0;
    for seed in 0..3 {
        let cfg = SynthConfig { m: 40, n: 60, c: 4, seed, ..SynthConfig::default() };
        let sample = gen_ground_truth(&cfg).unwrap();
        let obs = mask_uniform(&sample.truth, 0.5, &cfg.noise, seed).unwrap();
        let (_, report) = mlp_train_observed(&obs, &small_cfg(seed)).unwrap();
        assert_eq!(report.batch_losses.len(), 2000);
        initial += report.initial_train_loss;
        last += report.final_train_loss;
    }
    assert!(last < initial, "initial {initial} final {last}");
}

#[test]
fn training_is_reproducible() {
    let cfg = SynthConfig { m: 20, n: 30, c: 3, seed: 5, ..SynthConfig::default() };
    let sample = gen_ground_truth(&cfg).unwrap();
    let obs = mask_uniform(&sample.truth, 0.5, &cfg.noise, 5).unwrap();
    let train = TrainConfig { steps: 50, batch_size: 32, ..small_cfg(9) };
    let (a, ra) = mlp_train_observed(&obs, &train).unwrap();
    let (b, rb) = mlp_train_observed(&obs, &train).unwrap();
    assert_eq!(a.params_flat(), b.params_flat());
    assert_eq!(ra, rb);
}

#[test]
fn row_predictions_are_rescaled_and_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let base = common::random_matrix(&mut rng, 10, 12);
    // rows 2 and 5 identical
    let b = DenseMatrix::from_fn(10, 12, |i, j| if i == 5 { base[(2, j)] } else { base[(i, j)] });
    let model = MlpModel::new(10, 12, &[16, 8], 3).unwrap();
    let all = model.predict_all(&b).unwrap();
    assert!(all.as_slice().iter().all(|&x| x > -1.0 && x < 1.0));
    let r2 = mlp_predict_row(&model, &b, 2).unwrap();
    let r5 = mlp_predict_row(&model, &b, 5).unwrap();
    assert_eq!(r2, r5);
    for (x, y) in r2.iter().zip(all.row(2)) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-12);
    }
    assert!(mlp_predict_row(&model, &DenseMatrix::zeros(10, 11), 0).is_err());
}

#[test]
fn gradient_check_is_deterministic() {
    let model = MlpModel::new(4, 5, &[7, 3], 2).unwrap();
    let input: Vec<f64> = (0..9).map(|k| (k as f64 * 0.7).sin()).collect();
    let a = gradient_check(&model, &input, 0.3, 1e-5).unwrap();
    let b = gradient_check(&model, &input, 0.3, 1e-5).unwrap();
    assert_eq!(a, b);
    assert!(a.max_rel_error < 1e-4);
    assert!(gradient_check(&model, &input, 0.3, 1e-3).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = MlpModel::new(6, 7, &[5, 4], 11).unwrap();
    let cfg = small_cfg(11);
    save_checkpoint(&path, &model, Some(&cfg)).unwrap();
    let (loaded, header) = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.params_flat(), model.params_flat());
    assert_eq!(header.layer_sizes, vec![13, 5, 4, 1]);
    assert_eq!(header.config, Some(cfg));
}
