//! Deterministic synthetic datasets shared by the integration tests.

#![allow(dead_code)]

pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabstack::schema::TabularDataset;

pub struct Split {
    pub name: &'static str,
    pub label: &'static str,
    pub train: TabularDataset,
    pub test: TabularDataset,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn build(
    name: &'static str,
    headers: &[&str],
    rows: Vec<Vec<String>>,
    n_train: usize,
) -> Split {
    let headers: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    let label = "target";
    let (train, test) = rows.split_at(n_train);
    Split {
        name,
        label,
        train: TabularDataset::from_rows(headers.clone(), train.to_vec(), Some(label)).unwrap(),
        test: TabularDataset::from_rows(headers, test.to_vec(), Some(label)).unwrap(),
    }
}

/// Binary task from a noisy logistic model over numeric and categorical inputs.
pub fn binary_mixed(n: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let colors = ["red", "green", "blue", "black", "white"];
    let rows = (0..n)
        .map(|_| {
            let x1 = normal(&mut rng);
            let x2 = normal(&mut rng);
            let x3: f64 = rng.gen_range(0.0..10.0);
            let c = rng.gen_range(0..colors.len());
            let effect = [1.0, -1.0, 0.5, 0.0, -0.5][c];
            let z = 1.5 * x1 - x2 * x2 + 0.3 * x3 + effect - 1.0 + 0.5 * normal(&mut rng);
            let missing = rng.gen_bool(0.05);
            vec![
                if missing { String::new() } else { format!("{x1:.4}") },
                format!("{x2:.4}"),
                format!("{x3:.3}"),
                colors[c].to_string(),
                if z > 0.0 { "yes" } else { "no" }.to_string(),
            ]
        })
        .collect();
    build("binary_mixed", &["x1", "x2", "x3", "color", "target"], rows, n * 7 / 10)
}

/// Three-class task with class-dependent Gaussian blobs and a categorical hint.
pub fn multiclass_blobs(n: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [(-1.0, 0.0), (1.0, 0.5), (0.0, -1.2)];
    let rows = (0..n)
        .map(|_| {
            let k = rng.gen_range(0..3);
            let a = centers[k].0 + 0.9 * normal(&mut rng);
            let b = centers[k].1 + 0.9 * normal(&mut rng);
            let hint = if rng.gen_bool(0.6) { k } else { rng.gen_range(0..3) };
            vec![
                format!("{a:.4}"),
                format!("{b:.4}"),
                format!("{:.4}", normal(&mut rng)),
                format!("g{hint}"),
                ["setosa", "versicolor", "virginica"][k].to_string(),
            ]
        })
        .collect();
    build("multiclass_blobs", &["a", "b", "noise", "group", "target"], rows, n * 7 / 10)
}

/// Friedman #1 regression surface.
pub fn friedman(n: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..6).map(|_| rng.gen()).collect();
            let y = 10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
                + 20.0 * (x[2] - 0.5).powi(2)
                + 10.0 * x[3]
                + 5.0 * x[4]
                + normal(&mut rng);
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:.5}")).collect();
            row.push(format!("{y:.5}"));
            row
        })
        .collect();
    build("friedman", &["f0", "f1", "f2", "f3", "f4", "f5", "target"], rows, n * 7 / 10)
}

/// Regression where a categorical level scales a numeric slope.
pub fn regression_interaction(n: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shops = ["north", "south", "east", "west", "central", "outlet"];
    let rows = (0..n)
        .map(|_| {
            let s = rng.gen_range(0..shops.len());
            let size: f64 = rng.gen_range(10.0..100.0);
            let age: f64 = rng.gen_range(0.0..30.0);
            let y = (1.0 + s as f64 * 0.4) * size - 0.8 * age + 5.0 * normal(&mut rng);
            vec![
                shops[s].to_string(),
                format!("{size:.2}"),
                format!("{age:.1}"),
                format!("{y:.3}"),
            ]
        })
        .collect();
    build("regression_interaction", &["shop", "size", "age", "target"], rows, n * 7 / 10)
}

/// Binary XOR of two noisy signs plus distractors.
pub fn binary_xor(n: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let a = normal(&mut rng);
            let b = normal(&mut rng);
            let flip = rng.gen_bool(0.1);
            let y = ((a > 0.0) ^ (b > 0.0)) ^ flip;
            vec![
                format!("{a:.4}"),
                format!("{b:.4}"),
                format!("{:.4}", normal(&mut rng)),
                format!("{:.4}", normal(&mut rng)),
                if y { "1" } else { "0" }.to_string(),
            ]
        })
        .collect();
    build("binary_xor", &["a", "b", "d1", "d2", "target"], rows, n * 7 / 10)
}

/// Four-class task driven by a short text field and a numeric score.
pub fn multiclass_text(n: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = [
        ["great", "excellent", "love", "fine"],
        ["bad", "awful", "hate", "broken"],
        ["late", "slow", "delay", "wait"],
        ["cheap", "price", "cost", "deal"],
    ];
    let rows = (0..n)
        .map(|_| {
            let k = rng.gen_range(0..4);
            let mut text = Vec::new();
            for _ in 0..6 {
                let src = if rng.gen_bool(0.7) { k } else { rng.gen_range(0..4) };
                text.push(words[src][rng.gen_range(0..4)]);
                if rng.gen_bool(0.5) {
                    text.push(["the", "a", "very", "so", "it", "was"][rng.gen_range(0..6)]);
                }
            }
            let score = k as f64 + 1.5 * normal(&mut rng);
            vec![
                text.join(" "),
                format!("{score:.3}"),
                ["praise", "complaint", "shipping", "pricing"][k].to_string(),
            ]
        })
        .collect();
    build("multiclass_text", &["review", "score", "target"], rows, n * 7 / 10)
}

pub fn corpus(n: usize, seed: u64) -> Vec<Split> {
    vec![
        binary_mixed(n, seed),
        multiclass_blobs(n, seed + 1),
        friedman(n, seed + 2),
        regression_interaction(n, seed + 3),
        binary_xor(n, seed + 4),
        multiclass_text(n, seed + 5),
    ]
}

/// Records every fold fit reported by the orchestrator.
#[derive(Default)]
pub struct FoldAudit {
    pub fits: Vec<FoldRecord>,
}

pub struct FoldRecord {
    pub layer: usize,
    pub family: tabstack::learners::LearnerFamily,
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub predicted: Vec<usize>,
}

impl tabstack::ensemble::FoldObserver for FoldAudit {
    fn fold_fitted(
        &mut self,
        layer: usize,
        family: tabstack::learners::LearnerFamily,
        repeat: usize,
        fold: usize,
        train: &[usize],
        predicted: &[usize],
    ) {
        self.fits.push(FoldRecord {
            layer,
            family,
            repeat,
            fold,
            train: train.to_vec(),
            predicted: predicted.to_vec(),
        });
    }
}

impl FoldAudit {
    /// Fits whose predicted rows overlap their training rows, and rows left
    /// unpredicted within a (layer, family, repeat).
    pub fn violations(&self, rows: usize) -> (usize, usize) {
        let mut overlaps = 0;
        let mut coverage = std::collections::BTreeMap::new();
        for f in &self.fits {
            let train: std::collections::HashSet<_> = f.train.iter().collect();
            if f.predicted.iter().any(|i| train.contains(i)) {
                overlaps += 1;
            }
            let seen = coverage
                .entry((f.layer, f.family, f.repeat))
                .or_insert_with(|| vec![0usize; rows]);
            for &i in &f.predicted {
                seen[i] += 1;
            }
        }
        let gaps = coverage.values().map(|s| s.iter().filter(|&&c| c != 1).count()).sum();
        (overlaps, gaps)
    }
}

/// Test-set predictions as exact bit patterns.
pub fn prediction_bits(values: &ndarray::Array2<f64>) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}
