//! Encoded learning targets.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{class_vocabulary, parse_number, ProblemType};

/// Label column encoded for training: class indices or real values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes { labels: Vec<usize>, num_classes: usize },
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Targets::Classes { num_classes, .. } => *num_classes,
            Targets::Values(_) => 1,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Targets::Classes { .. })
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes {
                labels,
                num_classes,
            } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
            Targets::Values(v) => Targets::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }

    /// Target as a real number for row `i` (class index for classification).
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Targets::Classes { labels, .. } => labels[i] as f64,
            Targets::Values(v) => v[i],
        }
    }

    /// Prediction matrix that puts all mass on the true class / the true value.
    pub fn as_prediction(&self) -> Array2<f64> {
        match self {
            Targets::Classes {
                labels,
                num_classes,
            } => {
                let mut out = Array2::zeros((labels.len(), *num_classes));
                for (r, &l) in labels.iter().enumerate() {
                    out[[r, l]] = 1.0;
                }
                out
            }
            Targets::Values(v) => Array2::from_shape_vec((v.len(), 1), v.clone()).unwrap(),
        }
    }
}

/// Maps raw label strings to [`Targets`] and back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEncoder {
    pub problem: ProblemType,
    pub classes: Vec<String>,
}

impl LabelEncoder {
    pub fn fit(problem: ProblemType, labels: &[Option<String>]) -> Self {
        let classes = if problem.is_classification() {
            class_vocabulary(labels)
        } else {
            Vec::new()
        };
        LabelEncoder { problem, classes }
    }

    pub fn encode(&self, labels: &[Option<String>]) -> Result<Targets> {
        if self.problem.is_classification() {
            let index: HashMap<&str, usize> = self
                .classes
                .iter()
                .enumerate()
                .map(|(i, c)| (c.as_str(), i))
                .collect();
            let labels = labels
                .iter()
                .map(|l| {
                    let l = l.as_deref().ok_or(Error::MissingLabels { count: 1 })?;
                    index
                        .get(l)
                        .copied()
                        .ok_or_else(|| Error::SchemaMismatch(format!("unknown class `{l}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Targets::Classes {
                labels,
                num_classes: self.classes.len(),
            })
        } else {
            let values = labels
                .iter()
                .map(|l| {
                    l.as_deref().and_then(parse_number).ok_or_else(|| {
                        Error::SchemaMismatch(format!("non-numeric regression label {l:?}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Targets::Values(values))
        }
    }

    pub fn decode(&self, class: usize) -> &str {
        &self.classes[class]
    }
}
