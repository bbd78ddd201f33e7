mod common;

use common::oracles::{embedding_width, gradient_check};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabstack::learners::Deadline;
use tabstack::net::{
    embedding_dim, forward, train, Mode, NetBatch, NetConfig, NetHyperparameters, NetInput, NetParams, NormStats,
    TabularNet,
};
use tabstack::task::Targets;

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..20 {
        let check = gradient_check(seed);
        assert!(check.coordinates > 100);
        assert!(
            check.max_relative_error < 1e-4,
            "seed {seed}: relative error {}",
            check.max_relative_error
        );
    }
}

#[test]
fn embedding_widths_follow_sizing_rule() {
    for k in [4u32, 10, 100, 1000, 1_000_000] {
        assert_eq!(embedding_dim(k).unwrap(), embedding_width(k as f64), "k = {k}");
    }
    assert_eq!(embedding_dim(1000).unwrap(), 77);
    assert_eq!(embedding_dim(u32::MAX).unwrap(), 100);
}

fn regression_data(rows: usize, seed: u64) -> (Array2<f64>, Array2<u32>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((rows, 3), |_| rng.gen_range(-1.0..1.0));
    let codes = Array2::from_shape_fn((rows, 1), |_| rng.gen_range(1..6u32));
    let y = (0..rows)
        .map(|r| 2.0 * x[[r, 0]] - x[[r, 1]] + codes[[r, 0]] as f64 * 0.3)
        .collect();
    (x, codes, y)
}

#[test]
fn constant_target_is_learned() {
    let (x, codes, _) = regression_data(200, 3);
    let targets = Targets::Values(vec![7.0; 200]);
    let hyper = NetHyperparameters {
        max_epochs: 30,
        ..Default::default()
    };
    let net = TabularNet::fit(
        NetInput {
            numeric: &x,
            codes: &codes,
        },
        &[5],
        &targets,
        None,
        &hyper,
        &Deadline::unlimited(),
        11,
    )
    .unwrap();
    for p in net.predict(&x, &codes).column(0) {
        assert!((p - 7.0).abs() < 1e-3, "prediction {p}");
    }
}

#[test]
fn weight_decay_shrinks_parameters() {
    let (x, codes, y) = regression_data(300, 5);
    let batch = NetBatch::<f64>::from_f64(&x, &codes);
    let targets = Targets::Values(y);
    let norm = |wd: f64| {
        let hyper = NetHyperparameters {
            weight_decay: wd,
            max_epochs: 25,
            patience: 1000,
            learning_rate: 3e-3,
            dropout: 0.0,
            ..Default::default()
        };
        let config = NetConfig::new(3, vec![5], 1, true, hyper).unwrap();
        let mut net = train(&config, &batch, &targets, None, &Deadline::unlimited(), 9).unwrap();
        net.params.squared_norm()
    };
    let free = norm(0.0);
    let decayed = norm(0.5);
    assert!(decayed < free, "decayed {decayed} vs free {free}");
}

#[test]
fn inference_is_deterministic_and_row_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let config = NetConfig::new(3, vec![5], 4, false, NetHyperparameters::default()).unwrap();
    let params: NetParams<f64> = NetParams::random(&config, &mut rng);
    let stats = NormStats::new(&config);
    let (x, codes, _) = regression_data(30, 2);
    let batch = NetBatch::<f64>::from_f64(&x, &codes);
    let all = forward(&config, &params, &stats, &batch, Mode::Inference);
    let idx: Vec<usize> = (0..30).rev().collect();
    let reversed = forward(&config, &params, &stats, &batch.select(&idx), Mode::Inference);
    for (i, &j) in idx.iter().enumerate() {
        assert_eq!(all.row(j), reversed.row(i));
    }
}
