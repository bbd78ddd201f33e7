//! Independent reference computations used to check library results.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabstack::net::{loss_and_grad, NetBatch, NetConfig, NetHyperparameters, NetParams};
use tabstack::task::Targets;

/// AUC as the fraction of (positive, negative) pairs ordered correctly,
/// counting ties as one half.
pub fn pairwise_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let mut good = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                good += 1.0;
            } else if si == sj {
                good += 0.5;
            }
        }
    }
    good / pairs
}

/// Embedding width straight from the sizing rule.
pub fn embedding_width(k: f64) -> usize {
    ((1.6 * k.powf(0.56)).ceil() as usize).min(100)
}

pub struct GradientCheck {
    pub max_relative_error: f64,
    pub coordinates: usize,
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares analytic gradients with central differences (step 1e-5) on a
/// 20-row instance with four numeric inputs and one embedded categorical
/// input. Checks sampled coordinates of every tensor plus random unit directions.
pub fn gradient_check(seed: u64) -> GradientCheck {
    const STEP: f64 = 1e-5;
    const PER_TENSOR: usize = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = 20;
    let classes = 3;
    let config = NetConfig::new(4, vec![6], classes, false, NetHyperparameters::default()).unwrap();
    let params: NetParams<f64> = NetParams::random(&config, &mut rng);
    let numeric = Array2::from_shape_fn((rows, 4), |_| rng.gen_range(-2.0..2.0));
    let codes = Array2::from_shape_fn((rows, 1), |_| rng.gen_range(0..7u32));
    let batch = NetBatch::<f64>::from_f64(&numeric, &codes);
    let targets = Targets::Classes {
        labels: (0..rows).map(|_| rng.gen_range(0..classes)).collect(),
        num_classes: classes,
    };
    let loss_at = |p: &NetParams<f64>| loss_and_grad(&config, p, &batch, &targets, None).0;
    let (_, mut grad, _) = loss_and_grad(&config, &params, &batch, &targets, None);
    let analytic: Vec<Vec<f64>> = grad.tensors_mut().into_iter().map(|(t, _)| t.to_vec()).collect();

    let mut worst: f64 = 0.0;
    let mut coordinates = 0;
    for (ti, g) in analytic.iter().enumerate() {
        for _ in 0..PER_TENSOR.min(g.len()) {
            let idx = rng.gen_range(0..g.len());
            let mut plus = params.clone();
            plus.tensors_mut()[ti].0[idx] += STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].0[idx] -= STEP;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * STEP);
            worst = worst.max(relative_error(g[idx], numeric));
            coordinates += 1;
        }
    }
    for _ in 0..3 {
        let mut direction: Vec<Vec<f64>> =
            analytic.iter().map(|g| g.iter().map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let norm = direction.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        direction.iter_mut().flatten().for_each(|v| *v /= norm);
        let along = |sign: f64| {
            let mut p = params.clone();
            for ((t, _), d) in p.tensors_mut().into_iter().zip(&direction) {
                for (v, dv) in t.iter_mut().zip(d) {
                    *v += sign * STEP * dv;
                }
            }
            loss_at(&p)
        };
        let numeric = (along(1.0) - along(-1.0)) / (2.0 * STEP);
        let exact: f64 = analytic
            .iter()
            .zip(&direction)
            .map(|(g, d)| g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        worst = worst.max(relative_error(exact, numeric));
    }
    GradientCheck {
        max_relative_error: worst,
        coordinates,
    }
}
