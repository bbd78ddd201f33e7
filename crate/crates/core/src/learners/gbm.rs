//! Gradient-boosted regression trees with histogram splits (at most 255
//! bins per feature) and leaf-wise growth.
//!
//! Squared error for regression, logistic loss for binary tasks and softmax
//! cross-entropy (one tree per class and round) for multiclass tasks. Leaf
//! values are Newton steps `-G / (H + lambda)` scaled by the learning rate.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::Deadline;
use crate::error::{Error, Result};
use crate::task::Targets;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub max_rounds: usize,
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub min_samples_leaf: usize,
    pub lambda: f64,
    /// Rounds without holdout improvement before stopping.
    pub patience: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            max_rounds: 10_000,
            learning_rate: 0.05,
            num_leaves: 31,
            min_samples_leaf: 10,
            lambda: 1.0,
            patience: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoostKind {
    Regression,
    Binary,
    Multiclass(usize),
}

impl BoostKind {
    fn trees_per_round(&self) -> usize {
        match self {
            BoostKind::Multiclass(k) => *k,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf(v) => return *v,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, RegNode::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub kind: BoostKind,
    pub init: Vec<f64>,
    /// `rounds[r][k]` is the tree for score `k` added in round `r`.
    pub rounds: Vec<Vec<RegTree>>,
    /// Holdout loss after each completed round (index 0 = prior only).
    pub holdout_trace: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    v.iter_mut().for_each(|x| *x /= s);
}

impl BoostedTrees {
    /// Constant model predicting the training prior.
    pub fn prior(targets: &Targets) -> BoostedTrees {
        let (kind, init) = match targets {
            Targets::Values(v) => {
                let mean = if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
                (BoostKind::Regression, vec![mean])
            }
            Targets::Classes {
                labels,
                num_classes,
            } => {
                let mut counts = vec![0.0; *num_classes];
                for &l in labels {
                    counts[l] += 1.0;
                }
                let n = labels.len().max(1) as f64;
                let p: Vec<f64> = counts.iter().map(|c| (c / n).clamp(1e-15, 1.0 - 1e-15)).collect();
                if *num_classes == 2 {
                    (BoostKind::Binary, vec![(p[1] / p[0]).ln()])
                } else {
                    (BoostKind::Multiclass(*num_classes), p.iter().map(|q| q.ln()).collect())
                }
            }
        };
        BoostedTrees {
            kind,
            init,
            rounds: Vec::new(),
            holdout_trace: Vec::new(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self.kind {
            BoostKind::Regression => 1,
            BoostKind::Binary => 2,
            BoostKind::Multiclass(k) => k,
        }
    }

    fn raw_scores(&self, x: &Array2<f64>) -> Array2<f64> {
        let k = self.init.len();
        let mut scores = Array2::zeros((x.nrows(), k));
        for (r, row) in x.rows().into_iter().enumerate() {
            for j in 0..k {
                scores[[r, j]] = self.init[j];
            }
            for round in &self.rounds {
                for (j, tree) in round.iter().enumerate() {
                    scores[[r, j]] += tree.predict_row(row);
                }
            }
        }
        scores
    }

    fn link(kind: BoostKind, scores: &Array2<f64>) -> Array2<f64> {
        match kind {
            BoostKind::Regression => scores.clone(),
            BoostKind::Binary => {
                let mut out = Array2::zeros((scores.nrows(), 2));
                for r in 0..scores.nrows() {
                    let p = sigmoid(scores[[r, 0]]);
                    out[[r, 0]] = 1.0 - p;
                    out[[r, 1]] = p;
                }
                out
            }
            BoostKind::Multiclass(_) => {
                let mut out = scores.clone();
                for mut row in out.rows_mut() {
                    softmax_in_place(row.as_slice_mut().unwrap());
                }
                out
            }
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        Self::link(self.kind, &self.raw_scores(x))
    }

    pub fn fit(
        x: &Array2<f64>,
        targets: &Targets,
        holdout: Option<(&Array2<f64>, &Targets)>,
        params: &GbmParams,
        deadline: &Deadline,
    ) -> Result<BoostedTrees> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("no training rows".into()));
        }
        let mut model = Self::prior(targets);
        let kind = model.kind;
        let k = kind.trees_per_round();
        let binned = Binned::new(x);

        let mut scores = Array2::from_shape_fn((n, k), |(_, j)| model.init[j]);
        let mut holdout_scores = holdout.map(|(hx, _)| Array2::from_shape_fn((hx.nrows(), k), |(_, j)| model.init[j]));
        let holdout_loss = |s: &Array2<f64>, t: &Targets| loss(kind, s, t);
        if let (Some((_, ht)), Some(hs)) = (holdout, &holdout_scores) {
            model.holdout_trace.push(holdout_loss(hs, ht));
        }
        let mut best_round = 0usize;
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut probs = vec![0.0; k];

        for round in 0..params.max_rounds {
            if round > 0 && deadline.expired() {
                log::debug!("boosting stopped at round {round} by the time allowance");
                break;
            }
            let mut trees = Vec::with_capacity(k);
            for j in 0..k {
                for r in 0..n {
                    let (g, h) = match (kind, targets) {
                        (BoostKind::Regression, Targets::Values(y)) => (scores[[r, 0]] - y[r], 1.0),
                        (BoostKind::Binary, Targets::Classes { labels, .. }) => {
                            let p = sigmoid(scores[[r, 0]]);
                            (p - labels[r] as f64, (p * (1.0 - p)).max(1e-16))
                        }
                        (BoostKind::Multiclass(_), Targets::Classes { labels, .. }) => {
                            probs.copy_from_slice(scores.row(r).as_slice().unwrap());
                            softmax_in_place(&mut probs);
                            let y = if labels[r] == j { 1.0 } else { 0.0 };
                            (probs[j] - y, (probs[j] * (1.0 - probs[j])).max(1e-16))
                        }
                        _ => unreachable!("target kind fixed by prior"),
                    };
                    grad[r] = g;
                    hess[r] = h;
                }
                let (tree, leaf_rows) = grow_tree(&binned, &grad, &hess, params);
                trees.push((tree, leaf_rows));
            }
            for (j, (tree, leaf_rows)) in trees.iter().enumerate() {
                for (value, rows) in leaf_rows {
                    for &r in rows {
                        scores[[r as usize, j]] += value;
                    }
                }
                if let (Some((hx, _)), Some(hs)) = (holdout, holdout_scores.as_mut()) {
                    for (r, row) in hx.rows().into_iter().enumerate() {
                        hs[[r, j]] += tree.predict_row(row);
                    }
                }
            }
            model.rounds.push(trees.into_iter().map(|(t, _)| t).collect());

            if let (Some((_, ht)), Some(hs)) = (holdout, &holdout_scores) {
                let l = holdout_loss(hs, ht);
                model.holdout_trace.push(l);
                if l < model.holdout_trace[best_round] {
                    best_round = round + 1;
                }
                if round + 1 - best_round >= params.patience {
                    break;
                }
            } else {
                best_round = round + 1;
            }
        }
        model.rounds.truncate(best_round);
        Ok(model)
    }
}

fn loss(kind: BoostKind, scores: &Array2<f64>, targets: &Targets) -> f64 {
    let n = scores.nrows().max(1) as f64;
    match (kind, targets) {
        (BoostKind::Regression, Targets::Values(y)) => {
            scores.column(0).iter().zip(y).map(|(s, y)| (s - y).powi(2)).sum::<f64>() / n
        }
        (_, Targets::Classes { labels, .. }) => {
            let probs = BoostedTrees::link(kind, scores);
            labels
                .iter()
                .enumerate()
                .map(|(r, &l)| -probs[[r, l]].clamp(1e-15, 1.0 - 1e-15).ln())
                .sum::<f64>()
                / n
        }
        _ => f64::NAN,
    }
}

/// Upper bound on the number of bins per feature.
const MAX_BINS: usize = 255;

/// Features quantized to per-feature bins, stored feature-major.
struct Binned {
    rows: usize,
    /// `bins[f * rows + r]` is the bin of row `r` on feature `f`.
    bins: Vec<u8>,
    /// Upper bound of each bin but the last; bin `b` holds `x <= upper[b]`.
    upper: Vec<Vec<f64>>,
    /// Offset of each feature's histogram slots.
    offsets: Vec<usize>,
    total_bins: usize,
}

impl Binned {
    fn new(x: &Array2<f64>) -> Binned {
        let rows = x.nrows();
        let mut bins = vec![0u8; rows * x.ncols()];
        let mut upper = Vec::with_capacity(x.ncols());
        let mut offsets = Vec::with_capacity(x.ncols());
        let mut total_bins = 0;
        for f in 0..x.ncols() {
            let mut values: Vec<f64> = x.column(f).iter().copied().filter(|v| !v.is_nan()).collect();
            values.sort_by(f64::total_cmp);
            let bounds = bin_bounds(&values);
            let col = &mut bins[f * rows..(f + 1) * rows];
            for (r, &v) in x.column(f).iter().enumerate() {
                // missing values always go right
                col[r] = if v.is_nan() { bounds.len() } else { bounds.partition_point(|&b| b < v) } as u8;
            }
            offsets.push(total_bins);
            total_bins += bounds.len() + 1;
            upper.push(bounds);
        }
        Binned {
            rows,
            bins,
            upper,
            offsets,
            total_bins,
        }
    }

    fn column(&self, f: usize) -> &[u8] {
        &self.bins[f * self.rows..(f + 1) * self.rows]
    }
}

/// Bin boundaries: midpoints between distinct values, merged into
/// equal-frequency groups when there are more than `MAX_BINS` values.
fn bin_bounds(sorted: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &v in sorted {
        match distinct.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => distinct.push((v, 1)),
        }
    }
    if distinct.len() <= 1 {
        return Vec::new();
    }
    let mid = |a: f64, b: f64| {
        let m = a + (b - a) / 2.0;
        if m >= b { a } else { m }
    };
    if distinct.len() <= MAX_BINS {
        return distinct.windows(2).map(|w| mid(w[0].0, w[1].0)).collect();
    }
    let per_bin = sorted.len() as f64 / MAX_BINS as f64;
    let mut bounds = Vec::with_capacity(MAX_BINS - 1);
    let mut seen = 0usize;
    for w in distinct.windows(2) {
        seen += w[0].1;
        let target = (bounds.len() + 1) as f64 * per_bin;
        if seen as f64 >= target && bounds.len() < MAX_BINS - 1 {
            bounds.push(mid(w[0].0, w[1].0));
        }
    }
    bounds
}

#[derive(Clone, Copy, Default)]
struct Slot {
    g: f64,
    h: f64,
    n: u32,
}

fn histogram(binned: &Binned, rows: &[u32], grad: &[f64], hess: &[f64]) -> Vec<Slot> {
    let mut hist = vec![Slot::default(); binned.total_bins];
    for (f, &offset) in binned.offsets.iter().enumerate() {
        let col = binned.column(f);
        let slots = &mut hist[offset..offset + binned.upper[f].len() + 1];
        for &r in rows {
            let r = r as usize;
            let s = &mut slots[col[r] as usize];
            s.g += grad[r];
            s.h += hess[r];
            s.n += 1;
        }
    }
    hist
}

struct SplitInfo {
    gain: f64,
    feature: usize,
    bin: usize,
}

struct Leaf {
    rows: Vec<u32>,
    hist: Vec<Slot>,
    g: f64,
    h: f64,
    node: usize,
    best: Option<SplitInfo>,
}

fn leaf_score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

fn find_split(binned: &Binned, leaf: &Leaf, params: &GbmParams) -> Option<SplitInfo> {
    let m = leaf.rows.len();
    let min_leaf = params.min_samples_leaf.max(1);
    if m < 2 * min_leaf {
        return None;
    }
    let parent = leaf_score(leaf.g, leaf.h, params.lambda);
    let mut best: Option<SplitInfo> = None;
    for (f, &offset) in binned.offsets.iter().enumerate() {
        let nb = binned.upper[f].len();
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
        for b in 0..nb {
            let s = leaf.hist[offset + b];
            if s.n == 0 {
                continue;
            }
            gl += s.g;
            hl += s.h;
            nl += s.n as usize;
            if nl < min_leaf {
                continue;
            }
            if m - nl < min_leaf {
                break;
            }
            let gain = leaf_score(gl, hl, params.lambda) + leaf_score(leaf.g - gl, leaf.h - hl, params.lambda) - parent;
            if gain > 1e-12 && best.as_ref().is_none_or(|x| gain > x.gain) {
                best = Some(SplitInfo { gain, feature: f, bin: b });
            }
        }
    }
    best
}

/// Grows one leaf-wise tree; also returns `(leaf value, rows)` for score updates.
fn grow_tree(binned: &Binned, grad: &[f64], hess: &[f64], params: &GbmParams) -> (RegTree, Vec<(f64, Vec<u32>)>) {
    let rows: Vec<u32> = (0..binned.rows as u32).collect();
    let mut root = Leaf {
        hist: histogram(binned, &rows, grad, hess),
        g: grad.iter().sum(),
        h: hess.iter().sum(),
        rows,
        node: 0,
        best: None,
    };
    root.best = find_split(binned, &root, params);
    let mut nodes = vec![RegNode::Leaf(0.0)];
    let mut leaves = vec![root];

    while leaves.len() < params.num_leaves.max(1) {
        let pick = leaves
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.best.as_ref().map(|b| (i, b.gain)))
            .fold(None, |acc: Option<(usize, f64)>, (i, g)| match acc {
                Some((_, bg)) if bg >= g => acc,
                _ => Some((i, g)),
            });
        let Some((idx, _)) = pick else { break };
        let leaf = leaves.swap_remove(idx);
        let split = leaf.best.as_ref().unwrap();
        let col = binned.column(split.feature);
        let (lrows, rrows): (Vec<u32>, Vec<u32>) = leaf.rows.iter().partition(|&&r| col[r as usize] as usize <= split.bin);
        let left_node = nodes.len();
        nodes.push(RegNode::Leaf(0.0));
        nodes.push(RegNode::Leaf(0.0));
        nodes[leaf.node] = RegNode::Split {
            feature: split.feature,
            threshold: binned.upper[split.feature][split.bin],
            left: left_node,
            right: left_node + 1,
        };
        // build the smaller child's histogram, derive the sibling by subtraction
        let left_small = lrows.len() <= rrows.len();
        let small_rows = if left_small { &lrows } else { &rrows };
        let small = histogram(binned, small_rows, grad, hess);
        let mut large = leaf.hist;
        for (l, s) in large.iter_mut().zip(&small) {
            l.g -= s.g;
            l.h -= s.h;
            l.n -= s.n;
        }
        let (lhist, rhist) = if left_small { (small, large) } else { (large, small) };
        for (node, rows, hist) in [(left_node, lrows, lhist), (left_node + 1, rrows, rhist)] {
            let g = rows.iter().map(|&r| grad[r as usize]).sum();
            let h = rows.iter().map(|&r| hess[r as usize]).sum();
            let mut child = Leaf {
                rows,
                hist,
                g,
                h,
                node,
                best: None,
            };
            child.best = find_split(binned, &child, params);
            leaves.push(child);
        }
    }

    let mut leaf_rows = Vec::with_capacity(leaves.len());
    for leaf in leaves {
        let value = -params.learning_rate * leaf.g / (leaf.h + params.lambda);
        nodes[leaf.node] = RegNode::Leaf(value);
        leaf_rows.push((value, leaf.rows));
    }
    (RegTree { nodes }, leaf_rows)
}
