//! Repeated stratified k-fold bagging, stack-feature construction and greedy
//! ensemble selection.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{self, Deadline, LearnerFamily, LearnerSpec, TrainedModel};
use crate::preprocess::{FeatureMatrix, FeatureTransform, Provenance};
use crate::rng::{derive_seed, rng_from};
use crate::task::Targets;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_SELECTION_ITERATIONS: usize = 100;

/// Fold assignment of every row, for each repeat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// `assignments[repeat][row]` is the fold holding `row` out.
    pub assignments: Vec<Vec<usize>>,
}

/// Fold ids for one repeat. Classes are shuffled and dealt round-robin with
/// one running counter, so every fold gets within one row of each class's
/// share. Real targets are sorted and dealt in blocks of `k`, each block
/// assigned a random permutation of the folds.
fn assign_repeat(targets: &Targets, k: usize, seed: u64) -> Vec<usize> {
    let n = targets.len();
    let mut rng = rng_from(seed);
    let mut folds = vec![0; n];
    match targets {
        Targets::Classes { labels, num_classes } => {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); *num_classes];
            for (r, &l) in labels.iter().enumerate() {
                by_class[l].push(r);
            }
            // a random fold offset avoids always filling fold 0 first
            let mut counter = rand::Rng::gen_range(&mut rng, 0..k);
            for rows in by_class.iter_mut() {
                rows.shuffle(&mut rng);
                for &r in rows.iter() {
                    folds[r] = counter % k;
                    counter += 1;
                }
            }
        }
        Targets::Values(v) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            let mut perm: Vec<usize> = (0..k).collect();
            for block in order.chunks(k) {
                perm.shuffle(&mut rng);
                for (&r, &f) in block.iter().zip(&perm) {
                    folds[r] = f;
                }
            }
        }
    }
    folds
}

pub fn make_fold_plan(targets: &Targets, k: usize, n: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if targets.len() < k {
        return Err(Error::FoldCount {
            rows: targets.len(),
            k,
        });
    }
    let mut plan = FoldPlan {
        k,
        seed,
        assignments: Vec::new(),
    };
    plan.extend_to(targets, n);
    Ok(plan)
}

impl FoldPlan {
    pub fn repeats(&self) -> usize {
        self.assignments.len()
    }

    pub fn rows(&self) -> usize {
        self.assignments.first().map_or(0, Vec::len)
    }

    /// Adds repeats until there are `n`; existing repeats are unchanged.
    pub fn extend_to(&mut self, targets: &Targets, n: usize) {
        while self.assignments.len() < n {
            let r = self.assignments.len() as u64;
            self.assignments.push(assign_repeat(targets, self.k, derive_seed(self.seed, &[r])));
        }
    }

    /// (training rows, held-out rows) for one fold, both ascending.
    pub fn split(&self, repeat: usize, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (r, &f) in self.assignments[repeat].iter().enumerate() {
            if f == fold {
                test.push(r);
            } else {
                train.push(r);
            }
        }
        (train, test)
    }
}

/// One fold model of a bagged group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModel {
    pub repeat: usize,
    pub fold: usize,
    pub model: TrainedModel,
}

/// All fold models of one family at one layer, plus accumulated OOF sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedModelGroup {
    pub family: LearnerFamily,
    pub layer: usize,
    pub out_dim: usize,
    pub models: Vec<FoldModel>,
    pub oof_sum: Array2<f64>,
    pub oof_count: Vec<u32>,
}

impl BaggedModelGroup {
    pub fn new(family: LearnerFamily, layer: usize, rows: usize, out_dim: usize) -> Self {
        BaggedModelGroup {
            family,
            layer,
            out_dim,
            models: Vec::new(),
            oof_sum: Array2::zeros((rows, out_dim)),
            oof_count: vec![0; rows],
        }
    }

    pub fn add_fold(&mut self, repeat: usize, fold: usize, model: TrainedModel, held_out: &[usize], preds: &Array2<f64>) {
        for (i, &r) in held_out.iter().enumerate() {
            let mut row = self.oof_sum.row_mut(r);
            row += &preds.row(i);
            self.oof_count[r] += 1;
        }
        self.models.push(FoldModel { repeat, fold, model });
    }

    /// Rows with at least one OOF prediction.
    pub fn covered_rows(&self) -> Vec<usize> {
        (0..self.oof_count.len()).filter(|&r| self.oof_count[r] > 0).collect()
    }

    /// OOF predictions averaged over the repeats that predicted each row.
    /// Rows never held out (single-split training) get the mean of the
    /// covered rows.
    pub fn oof(&self) -> Array2<f64> {
        let mut out = self.oof_sum.clone();
        let covered = self.covered_rows();
        let fill = if covered.is_empty() {
            ndarray::Array1::zeros(self.out_dim)
        } else {
            let mut m = ndarray::Array1::zeros(self.out_dim);
            for &r in &covered {
                m += &(&self.oof_sum.row(r) / self.oof_count[r] as f64);
            }
            m / covered.len() as f64
        };
        for (r, mut row) in out.rows_mut().into_iter().enumerate() {
            match self.oof_count[r] {
                0 => row.assign(&fill),
                c => row /= c as f64,
            }
        }
        out
    }

    pub fn repeats_started(&self) -> usize {
        self.models.iter().map(|m| m.repeat + 1).max().unwrap_or(0)
    }

    /// Mean of every fold model's prediction.
    pub fn predict(&self, features: &FeatureMatrix) -> Result<Array2<f64>> {
        group_predict(self.models.iter().map(|m| &m.model), self.out_dim, features)
    }
}

pub fn group_predict<'a>(
    models: impl Iterator<Item = &'a TrainedModel>,
    out_dim: usize,
    features: &FeatureMatrix,
) -> Result<Array2<f64>> {
    let mut sum = Array2::zeros((features.rows(), out_dim));
    let mut count = 0usize;
    for m in models {
        sum += &m.predict(features)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::ModelUnavailable("group has no fold models".into()));
    }
    Ok(sum / count as f64)
}

/// Hooks observing fold fits; used to audit OOF hygiene.
pub trait FoldObserver {
    fn fold_fitted(&mut self, layer: usize, family: LearnerFamily, repeat: usize, fold: usize, train: &[usize], predicted: &[usize]);
}

impl FoldObserver for () {
    fn fold_fitted(&mut self, _: usize, _: LearnerFamily, _: usize, _: usize, _: &[usize], _: &[usize]) {}
}

/// Trains one fold model on the rows outside `fold` (early-stopping on the
/// held-out fold) and returns it with its held-out rows and predictions.
#[allow(clippy::too_many_arguments)]
pub fn fit_fold(
    spec: &LearnerSpec,
    features: &FeatureMatrix,
    targets: &Targets,
    plan: &FoldPlan,
    repeat: usize,
    fold: usize,
    deadline: &Deadline,
    seed: u64,
) -> Result<(TrainedModel, Vec<usize>, Array2<f64>)> {
    let (train, test) = plan.split(repeat, fold);
    let xt = features.select_rows(&train);
    let yt = targets.select(&train);
    let xh = features.select_rows(&test);
    let yh = targets.select(&test);
    let model = learners::fit(spec, &xt, &yt, Some((&xh, &yh)), deadline, seed)?;
    let preds = model.predict(&xh)?;
    Ok((model, test, preds))
}

/// Whether a group with the given per-repeat success counts is kept:
/// every started repeat must have at least `k - 1` successful folds.
pub fn group_survives(successes_per_repeat: &[usize], k: usize) -> bool {
    !successes_per_repeat.is_empty() && successes_per_repeat.iter().all(|&s| s + 1 >= k)
}

/// Fits all repeats and folds of `plan` sequentially. Fold seeds derive from
/// `seed` and (repeat, fold).
#[allow(clippy::too_many_arguments)]
pub fn fit_bagged_group(
    spec: &LearnerSpec,
    layer: usize,
    features: &FeatureMatrix,
    targets: &Targets,
    plan: &FoldPlan,
    deadline: &Deadline,
    seed: u64,
    observer: &mut dyn FoldObserver,
) -> Result<BaggedModelGroup> {
    let mut group = BaggedModelGroup::new(spec.family, layer, features.rows(), targets.output_dim());
    let mut successes = Vec::new();
    let mut last_error = None;
    for repeat in 0..plan.repeats() {
        let mut ok = 0;
        for fold in 0..plan.k {
            let fold_seed = derive_seed(seed, &[repeat as u64, fold as u64]);
            match fit_fold(spec, features, targets, plan, repeat, fold, deadline, fold_seed) {
                Ok((model, test, preds)) => {
                    let (train, _) = plan.split(repeat, fold);
                    observer.fold_fitted(layer, spec.family, repeat, fold, &train, &test);
                    group.add_fold(repeat, fold, model, &test, &preds);
                    ok += 1;
                }
                Err(e) => {
                    log::warn!("{} repeat {repeat} fold {fold} failed: {e}", spec.family);
                    last_error = Some(e);
                }
            }
        }
        successes.push(ok);
    }
    if group_survives(&successes, plan.k) {
        Ok(group)
    } else {
        Err(last_error.unwrap_or_else(|| Error::ModelUnavailable(format!("{} produced no models", spec.family))))
    }
}

/// Appends each group's prediction block to the base features:
/// width = base width + sum of output dims.
pub fn build_stack_features(
    base: &FeatureMatrix,
    blocks: &[(usize, LearnerFamily, &Array2<f64>)],
) -> Result<FeatureMatrix> {
    if blocks.is_empty() {
        return Ok(base.clone());
    }
    for (_, family, b) in blocks {
        if b.nrows() != base.rows() {
            return Err(Error::SchemaMismatch(format!(
                "{family} predictions have {} rows, features have {}",
                b.nrows(),
                base.rows()
            )));
        }
    }
    let views: Vec<_> = blocks.iter().map(|(_, _, b)| b.view()).collect();
    let extra = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
    let provenance = blocks
        .iter()
        .flat_map(|(layer, family, b)| {
            (0..b.ncols()).map(move |output| {
                Provenance::new(
                    &format!("layer{layer}_{family}"),
                    FeatureTransform::StackPrediction {
                        layer: *layer,
                        family: family.name().to_string(),
                        output,
                    },
                )
            })
        })
        .collect();
    base.with_numeric_columns(&extra, provenance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEnsemble {
    /// Selection counts divided by the number of selections kept.
    pub weights: Vec<f64>,
    pub counts: Vec<usize>,
    /// Selection steps kept (the best prefix of the greedy run).
    pub selections: usize,
    pub iterations: usize,
    /// Loss of the returned weighting on the selection rows.
    pub loss: f64,
    /// Best loss seen after each step (non-increasing).
    pub trace: Vec<f64>,
}

impl WeightedEnsemble {
    pub fn combine(&self, predictions: &[Array2<f64>]) -> Array2<f64> {
        let mut out = Array2::zeros(predictions[0].raw_dim());
        for (w, p) in self.weights.iter().zip(predictions) {
            if *w > 0.0 {
                out.scaled_add(*w, p);
            }
        }
        out
    }
}

/// Greedy forward selection with replacement: each step adds the candidate
/// that minimizes the loss of the running uniform average (lowest index on
/// ties). The shortest prefix reaching the lowest loss is returned, so the
/// result is never worse than the best single candidate.
pub fn ensemble_selection(
    predictions: &[Array2<f64>],
    loss: &dyn Fn(&Array2<f64>) -> Result<f64>,
    iterations: usize,
) -> Result<WeightedEnsemble> {
    if predictions.is_empty() || iterations == 0 {
        return Err(Error::InvalidArgument("ensemble selection needs candidates and iterations".into()));
    }
    let m = predictions.len();
    let mut sum = Array2::<f64>::zeros(predictions[0].raw_dim());
    let mut counts = vec![0usize; m];
    let mut best_counts = counts.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_len = 0;
    let mut trace = Vec::with_capacity(iterations);
    for step in 1..=iterations {
        let mut choice: Option<(usize, f64)> = None;
        for (i, p) in predictions.iter().enumerate() {
            let candidate = (&sum + p) / step as f64;
            let l = loss(&candidate)?;
            if choice.is_none_or(|(_, b)| l < b) {
                choice = Some((i, l));
            }
        }
        let (i, l) = choice.expect("at least one candidate");
        sum += &predictions[i];
        counts[i] += 1;
        if l < best_loss {
            best_loss = l;
            best_counts = counts.clone();
            best_len = step;
        }
        trace.push(best_loss);
    }
    if !best_loss.is_finite() {
        // every mixture scored non-finite; fall back to the first candidate
        best_counts = vec![0; m];
        best_counts[0] = 1;
        best_len = 1;
    }
    Ok(WeightedEnsemble {
        weights: best_counts.iter().map(|&c| c as f64 / best_len as f64).collect(),
        counts: best_counts,
        selections: best_len,
        iterations,
        loss: best_loss,
        trace,
    })
}
