use ndarray::Array2;
use proptest::prelude::*;
use tabstack::ensemble::{build_stack_features, ensemble_selection, group_survives, make_fold_plan};
use tabstack::learners::DEFAULT_ROSTER;
use tabstack::metrics::Metric;
use tabstack::preprocess::FeatureMatrix;
use tabstack::task::Targets;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stacked_width_is_base_plus_outputs(
        rows in 1usize..20,
        d in 0usize..15,
        families in 1usize..7,
        out_dim in 1usize..6,
    ) {
        let base = FeatureMatrix::numeric_only(Array2::zeros((rows, d)));
        let preds: Vec<Array2<f64>> = (0..families).map(|_| Array2::zeros((rows, out_dim))).collect();
        let blocks: Vec<_> = preds
            .iter()
            .zip(DEFAULT_ROSTER)
            .map(|(p, f)| (1usize, f, p))
            .collect();
        let stacked = build_stack_features(&base, &blocks).unwrap();
        prop_assert_eq!(stacked.width(), d + families * out_dim);
        prop_assert_eq!(stacked.provenance.len(), stacked.width());
    }
}

proptest! {
    #[test]
    fn fold_plans_partition_rows(
        labels in prop::collection::vec(0usize..3, 10..80),
        k in 2usize..6,
        n in 1usize..4,
        seed in any::<u64>(),
    ) {
        prop_assume!(labels.len() >= k);
        let targets = Targets::Classes { labels: labels.clone(), num_classes: 3 };
        let plan = make_fold_plan(&targets, k, n, seed).unwrap();
        for r in 0..n {
            let mut seen = vec![0usize; labels.len()];
            for f in 0..k {
                let (train, test) = plan.split(r, f);
                prop_assert_eq!(train.len() + test.len(), labels.len());
                for &i in &test {
                    seen[i] += 1;
                    prop_assert!(!train.contains(&i));
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            for c in 0..3 {
                let per_fold: Vec<usize> = (0..k)
                    .map(|f| plan.split(r, f).1.iter().filter(|&&i| labels[i] == c).count())
                    .collect();
                let lo = per_fold.iter().min().unwrap();
                let hi = per_fold.iter().max().unwrap();
                prop_assert!(hi - lo <= 1, "class {} spread {:?}", c, per_fold);
            }
        }
    }

    #[test]
    fn selection_never_loses_to_best_candidate(
        cols in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 30), 1..6),
        labels in prop::collection::vec(0usize..2, 30),
        iterations in 1usize..40,
    ) {
        let targets = Targets::Classes { labels: labels.clone(), num_classes: 2 };
        let preds: Vec<Array2<f64>> = cols
            .iter()
            .map(|c| Array2::from_shape_fn((30, 2), |(i, j)| if j == 1 { c[i] } else { 1.0 - c[i] }))
            .collect();
        let loss = |p: &Array2<f64>| Metric::LogLoss.loss(p, &targets);
        let ens = ensemble_selection(&preds, &loss, iterations).unwrap();
        let best = preds.iter().map(|p| loss(p).unwrap()).fold(f64::INFINITY, f64::min);
        prop_assert!(ens.loss <= best);
        prop_assert!((ens.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(ens.trace.windows(2).all(|w| w[1] <= w[0]));
        let recomputed = loss(&ens.combine(&preds)).unwrap();
        prop_assert!((recomputed - ens.loss).abs() < 1e-12);
    }
}

#[test]
fn regression_folds_cover_target_range() {
    let y: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let plan = make_fold_plan(&Targets::Values(y), 5, 1, 3).unwrap();
    for f in 0..5 {
        let test = plan.split(0, f).1;
        assert_eq!(test.len(), 20);
        // one row from every block of five sorted targets
        let mut blocks: Vec<usize> = test.iter().map(|i| i / 5).collect();
        blocks.sort();
        assert_eq!(blocks, (0..20).collect::<Vec<_>>());
    }
}

#[test]
fn survival_allows_one_failed_fold_per_repeat() {
    assert!(group_survives(&[5, 4], 5));
    assert!(!group_survives(&[5, 3], 5));
    assert!(!group_survives(&[], 5));
}

#[test]
fn too_few_rows_for_folds() {
    let t = Targets::Values(vec![1.0, 2.0]);
    assert!(make_fold_plan(&t, 5, 1, 0).is_err());
    assert!(make_fold_plan(&t, 1, 1, 0).is_err());
}
