//! Random forest and extremely randomized trees.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{feature_major, SplitRule, Tree, TreeParams, TreeTargets};
use super::Deadline;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};
use crate::task::Targets;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    Sqrt,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Feature subsampling for classification; regression always uses all features.
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub split_rule: SplitRule,
}

impl ForestParams {
    pub fn random_forest() -> Self {
        ForestParams {
            n_trees: 300,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            split_rule: SplitRule::Exhaustive,
        }
    }

    pub fn extra_trees() -> Self {
        ForestParams {
            bootstrap: false,
            split_rule: SplitRule::Random,
            ..Self::random_forest()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub out_dim: usize,
}

const TREES_PER_CHECK: usize = 16;

impl Forest {
    pub fn fit(
        x: &Array2<f64>,
        targets: &Targets,
        params: &ForestParams,
        deadline: &Deadline,
        seed: u64,
    ) -> Result<Forest> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("no training rows".into()));
        }
        let d = x.ncols();
        let tree_targets = match targets {
            Targets::Classes {
                labels,
                num_classes,
            } => TreeTargets::Classes {
                labels,
                num_classes: *num_classes,
            },
            Targets::Values(v) => TreeTargets::Values(v),
        };
        let max_features = match (targets, params.max_features) {
            (Targets::Classes { .. }, MaxFeatures::Sqrt) => Some(((d as f64).sqrt() as usize).max(1)),
            _ => None,
        };
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            max_features,
            split_rule: params.split_rule,
        };
        let columns = feature_major(x);
        let grow = |t: usize| {
            let mut rng = rng_from(derive_seed(seed, &[t as u64]));
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::grow_feature_major(columns.view(), &tree_targets, samples, &tree_params, &mut rng)
        };
        let mut trees = Vec::with_capacity(params.n_trees);
        while trees.len() < params.n_trees {
            if !trees.is_empty() && deadline.expired() {
                log::debug!("forest stopped at {} trees by the time allowance", trees.len());
                break;
            }
            let start = trees.len();
            let end = (start + TREES_PER_CHECK).min(params.n_trees);
            let batch: Vec<Tree> = (start..end).into_par_iter().map(grow).collect();
            trees.extend(batch);
        }
        Ok(Forest {
            trees,
            out_dim: targets.output_dim(),
        })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.out_dim));
        for (r, row) in x.rows().into_iter().enumerate() {
            for tree in &self.trees {
                for (o, v) in out.row_mut(r).iter_mut().zip(tree.leaf_value(row)) {
                    *o += v;
                }
            }
        }
        out /= self.trees.len().max(1) as f64;
        out
    }
}
