//! CART decision trees shared by the random forest and extra-trees learners.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitRule {
    /// Best threshold among midpoints of consecutive distinct values.
    Exhaustive,
    /// One uniform random threshold in `(min, max)` per candidate feature.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Candidate features drawn per node; `None` means all features.
    pub max_features: Option<usize>,
    pub split_rule: SplitRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Index into the tree's leaf-value table.
    Leaf { value: usize },
}

/// Targets seen by the tree builder.
pub enum TreeTargets<'a> {
    Classes { labels: &'a [usize], num_classes: usize },
    Values(&'a [f64]),
}

impl TreeTargets<'_> {
    fn dim(&self) -> usize {
        match self {
            TreeTargets::Classes { num_classes, .. } => *num_classes,
            TreeTargets::Values(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Leaf `i` occupies `leaf_values[i * dim..(i + 1) * dim]`.
    pub leaf_values: Vec<f64>,
    pub dim: usize,
}

impl Tree {
    pub fn leaf_value(&self, row: ArrayView1<f64>) -> &[f64] {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => {
                    return &self.leaf_values[value * self.dim..(value + 1) * self.dim];
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Grows a tree on the (possibly repeated) sample indices.
    pub fn grow(
        x: &Array2<f64>,
        targets: &TreeTargets,
        samples: Vec<usize>,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let columns = feature_major(x);
        Self::grow_feature_major(columns.view(), targets, samples, params, rng)
    }

    /// As [`Tree::grow`], with features laid out as `columns[[feature, row]]`.
    pub fn grow_feature_major(
        columns: ArrayView2<f64>,
        targets: &TreeTargets,
        samples: Vec<usize>,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let mut builder = Builder {
            x: columns,
            targets,
            params,
            rng,
            tree: Tree {
                nodes: Vec::new(),
                leaf_values: Vec::new(),
                dim: targets.dim(),
            },
        };
        let mut samples = samples;
        builder.build(&mut samples, 0);
        builder.tree
    }
}

/// Contiguous per-feature copy of a row-major matrix.
pub fn feature_major(x: &Array2<f64>) -> Array2<f64> {
    x.t().as_standard_layout().into_owned()
}

struct Builder<'a, 'b> {
    /// Feature-major: `x[[feature, row]]`.
    x: ArrayView2<'a, f64>,
    targets: &'a TreeTargets<'b>,
    params: &'a TreeParams,
    rng: &'a mut ChaCha8Rng,
    tree: Tree,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_, '_> {
    fn push_leaf(&mut self, samples: &[usize]) -> usize {
        let dim = self.tree.dim;
        let mut value = vec![0.0; dim];
        match self.targets {
            TreeTargets::Classes { labels, .. } => {
                for &s in samples {
                    value[labels[s]] += 1.0;
                }
            }
            TreeTargets::Values(v) => {
                value[0] = samples.iter().map(|&s| v[s]).sum();
            }
        }
        let n = samples.len().max(1) as f64;
        value.iter_mut().for_each(|v| *v /= n);
        let leaf = self.tree.leaf_values.len() / dim;
        self.tree.leaf_values.extend(value);
        self.tree.nodes.push(Node::Leaf { value: leaf });
        self.tree.nodes.len() - 1
    }

    fn is_pure(&self, samples: &[usize]) -> bool {
        match self.targets {
            TreeTargets::Classes { labels, .. } => samples.iter().all(|&s| labels[s] == labels[samples[0]]),
            TreeTargets::Values(v) => samples.iter().all(|&s| v[s] == v[samples[0]]),
        }
    }

    fn build(&mut self, samples: &mut [usize], depth: usize) -> usize {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || samples.len() < 2 * min_leaf || self.is_pure(samples) {
            return self.push_leaf(samples);
        }
        let Some(best) = self.best_split(samples) else {
            return self.push_leaf(samples);
        };
        let node = self.tree.nodes.len();
        self.tree.nodes.push(Node::Leaf { value: usize::MAX });
        let col = self.x.row(best.feature);
        let mid = partition(samples, |s| col[s] <= best.threshold);
        let (l, r) = samples.split_at_mut(mid);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.tree.nodes[node] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        node
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.nrows();
        match self.params.max_features {
            Some(m) if m < d => {
                let mut f = sample(self.rng, d, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, samples: &[usize]) -> Option<Candidate> {
        let features = self.candidate_features();
        let mut best: Option<Candidate> = None;
        for f in features {
            let cand = match self.params.split_rule {
                SplitRule::Exhaustive => self.exhaustive_split(samples, f),
                SplitRule::Random => self.random_split(samples, f),
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// Scans sorted values; score is the impurity proxy to maximize:
    /// sum over children of `sum_k count_k^2 / n` (classification) or
    /// `sum^2 / n` (regression).
    fn exhaustive_split(&self, samples: &[usize], f: usize) -> Option<Candidate> {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let col = self.x.row(f);
        let first = col[samples[0]];
        if samples.iter().all(|&s| col[s] == first) {
            return None;
        }
        let mut order: Vec<(f64, usize)> = samples.iter().map(|&s| (col[s], s)).collect();
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = order.len();
        let mut acc = SplitAccumulator::new(self.targets, order.iter().map(|o| o.1));
        let mut best: Option<Candidate> = None;
        for i in 0..n - 1 {
            acc.move_left(order[i].1);
            let nl = i + 1;
            if order[i].0 == order[i + 1].0 || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let score = acc.score();
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(Candidate {
                    feature: f,
                    threshold: midpoint(order[i].0, order[i + 1].0),
                    score,
                });
            }
        }
        best
    }

    fn random_split(&mut self, samples: &[usize], f: usize) -> Option<Candidate> {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let col = self.x.row(f);
        let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
            let v = col[s];
            (lo.min(v), hi.max(v))
        });
        if !(hi > lo) {
            return None;
        }
        let mut threshold = self.rng.gen_range(lo..hi);
        if threshold >= hi {
            threshold = lo;
        }
        let mut acc = SplitAccumulator::new(self.targets, samples.iter().copied());
        let mut nl = 0;
        for &s in samples {
            if col[s] <= threshold {
                acc.move_left(s);
                nl += 1;
            }
        }
        if nl < min_leaf || samples.len() - nl < min_leaf {
            return None;
        }
        Some(Candidate {
            feature: f,
            threshold,
            score: acc.score(),
        })
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // guard against rounding onto the upper value
    if m >= b {
        a
    } else {
        m
    }
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition(samples: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (mut yes, no): (Vec<usize>, Vec<usize>) = samples.iter().partition(|&&s| pred(s));
    let mid = yes.len();
    yes.extend(no);
    samples.copy_from_slice(&yes);
    mid
}

enum SplitAccumulator<'a> {
    Classes {
        labels: &'a [usize],
        left: Vec<f64>,
        right: Vec<f64>,
        nl: f64,
        nr: f64,
    },
    Values {
        values: &'a [f64],
        sl: f64,
        sr: f64,
        nl: f64,
        nr: f64,
    },
}

impl<'a> SplitAccumulator<'a> {
    fn new(targets: &'a TreeTargets, all: impl Iterator<Item = usize>) -> Self {
        match targets {
            TreeTargets::Classes { labels, num_classes } => {
                let mut right = vec![0.0; *num_classes];
                let mut nr = 0.0;
                for s in all {
                    right[labels[s]] += 1.0;
                    nr += 1.0;
                }
                SplitAccumulator::Classes {
                    labels,
                    left: vec![0.0; *num_classes],
                    right,
                    nl: 0.0,
                    nr,
                }
            }
            TreeTargets::Values(values) => {
                let (mut sr, mut nr) = (0.0, 0.0);
                for s in all {
                    sr += values[s];
                    nr += 1.0;
                }
                SplitAccumulator::Values {
                    values,
                    sl: 0.0,
                    sr,
                    nl: 0.0,
                    nr,
                }
            }
        }
    }

    fn move_left(&mut self, s: usize) {
        match self {
            SplitAccumulator::Classes {
                labels,
                left,
                right,
                nl,
                nr,
            } => {
                left[labels[s]] += 1.0;
                right[labels[s]] -= 1.0;
                *nl += 1.0;
                *nr -= 1.0;
            }
            SplitAccumulator::Values {
                values,
                sl,
                sr,
                nl,
                nr,
            } => {
                *sl += values[s];
                *sr -= values[s];
                *nl += 1.0;
                *nr -= 1.0;
            }
        }
    }

    fn score(&self) -> f64 {
        match self {
            SplitAccumulator::Classes {
                left, right, nl, nr, ..
            } => {
                left.iter().map(|c| c * c).sum::<f64>() / nl + right.iter().map(|c| c * c).sum::<f64>() / nr
            }
            SplitAccumulator::Values { sl, sr, nl, nr, .. } => sl * sl / nl + sr * sr / nr,
        }
    }
}
