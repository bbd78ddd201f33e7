//! Brute-force k-nearest neighbors on standardized features.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::task::Targets;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub x: Array2<f64>,
    pub targets: Targets,
}

impl Knn {
    pub fn fit(x: &Array2<f64>, targets: &Targets, params: &KnnParams) -> Knn {
        Knn {
            k: params.k.max(1),
            x: x.clone(),
            targets: targets.clone(),
        }
    }

    /// Indices of the `k` nearest stored rows, ties broken by lower index.
    pub fn neighbors(&self, query: ndarray::ArrayView1<f64>) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let d: f64 = row.iter().zip(query.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        let dim = self.targets.output_dim();
        let mut out = Array2::zeros((x.nrows(), dim));
        for (r, row) in x.rows().into_iter().enumerate() {
            let nb = self.neighbors(row);
            let w = 1.0 / nb.len().max(1) as f64;
            match &self.targets {
                Targets::Classes { labels, .. } => {
                    for i in nb {
                        out[[r, labels[i]]] += w;
                    }
                }
                Targets::Values(v) => {
                    out[[r, 0]] = nb.iter().map(|&i| v[i]).sum::<f64>() * w;
                }
            }
        }
        out
    }
}
