mod common;

use common::oracles::pairwise_auc;
use ndarray::Array2;
use proptest::prelude::*;
use tabstack::metrics::{auc, mean_ranks, Metric};
use tabstack::report::{losses_tie, rescale_losses};
use tabstack::task::Targets;

proptest! {
    #[test]
    fn auc_matches_pairwise_oracle(
        data in prop::collection::vec((0u8..20, any::<bool>()), 2..120)
    ) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 7.0).collect();
        let labels: Vec<usize> = data.iter().map(|(_, l)| *l as usize).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let got = auc(&scores, &labels).unwrap();
        prop_assert!((got - pairwise_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn rescaling_is_affine_invariant(
        losses in prop::collection::vec(-100.0f64..100.0, 2..8),
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let a = rescale_losses(&losses).unwrap();
        let moved: Vec<f64> = losses.iter().map(|l| l * scale + shift).collect();
        let b = rescale_losses(&moved).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn ranks_average_positions(values in prop::collection::vec(0u8..5, 1..12)) {
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        let r = mean_ranks(&v);
        let n = v.len() as f64;
        prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        for i in 0..v.len() {
            for j in 0..v.len() {
                if v[i] == v[j] {
                    prop_assert_eq!(r[i], r[j]);
                } else if v[i] < v[j] {
                    prop_assert!(r[i] < r[j]);
                }
            }
        }
    }

    #[test]
    fn moving_toward_truth_never_hurts(
        rows in prop::collection::vec((0.01f64..0.99, any::<bool>(), 0.0f64..10.0, 0.0f64..10.0), 4..40),
        t in 0.0f64..1.0,
    ) {
        let labels: Vec<usize> = rows.iter().map(|r| r.1 as usize).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let classes = Targets::Classes { labels: labels.clone(), num_classes: 2 };
        let probs = |mix: f64| Array2::from_shape_fn((rows.len(), 2), |(i, c)| {
            let p1 = rows[i].0 * (1.0 - mix) + labels[i] as f64 * mix;
            if c == 1 { p1 } else { 1.0 - p1 }
        });
        let values = Targets::Values(rows.iter().map(|r| r.2).collect());
        let regress = |mix: f64| Array2::from_shape_fn((rows.len(), 1), |(i, _)| rows[i].3 * (1.0 - mix) + rows[i].2 * mix);
        let t2 = (t + 1.0) / 2.0;
        for m in [Metric::LogLoss, Metric::Auc, Metric::Gini] {
            prop_assert!(m.loss(&probs(t2), &classes).unwrap() <= m.loss(&probs(t), &classes).unwrap() + 1e-12);
        }
        for m in [Metric::Mse, Metric::Mae, Metric::Rmsle, Metric::R2] {
            prop_assert!(m.loss(&regress(t2), &values).unwrap() <= m.loss(&regress(t), &values).unwrap() + 1e-9);
        }
    }
}

#[test]
fn auc_oracle_on_200_rows() {
    let scores: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
    let labels: Vec<usize> = (0..200).map(|i| usize::from((i * 13) % 7 < 3)).collect();
    assert!((auc(&scores, &labels).unwrap() - pairwise_auc(&scores, &labels)).abs() < 1e-12);
}

#[test]
fn rescale_and_ties() {
    let r = rescale_losses(&[0.2, 0.5, 0.8]).unwrap();
    for (a, b) in r.iter().zip([0.0, 0.5, 1.0]) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(losses_tie(0.300001, 0.300004));
    assert!(!losses_tie(0.30001, 0.30002));
}

#[test]
fn multiclass_auc_is_rejected() {
    let p = Array2::from_elem((3, 3), 1.0 / 3.0);
    let t = Targets::Classes { labels: vec![0, 1, 2], num_classes: 3 };
    assert!(Metric::Auc.loss(&p, &t).is_err());
}
