//! Evaluation metrics and the wrappers that map a requested metric onto the
//! one used internally for training and selection.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::ProblemType;
use crate::task::Targets;

pub const PROBABILITY_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auc,
    LogLoss,
    Accuracy,
    Mse,
    Mae,
    Rmsle,
    Gini,
    R2,
}

pub const ALL_METRICS: [Metric; 8] = [
    Metric::Auc,
    Metric::LogLoss,
    Metric::Accuracy,
    Metric::Mse,
    Metric::Mae,
    Metric::Rmsle,
    Metric::Gini,
    Metric::R2,
];

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::LogLoss => "log_loss",
            Metric::Accuracy => "accuracy",
            Metric::Mse => "mse",
            Metric::Mae => "mae",
            Metric::Rmsle => "rmsle",
            Metric::Gini => "gini",
            Metric::R2 => "r2",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Auc | Metric::Accuracy | Metric::Gini | Metric::R2)
    }

    /// Whether the metric consumes class probabilities.
    pub fn needs_probabilities(self) -> bool {
        matches!(self, Metric::Auc | Metric::LogLoss | Metric::Accuracy | Metric::Gini)
    }

    pub fn default_for(problem: ProblemType) -> Metric {
        match problem {
            ProblemType::Binary => Metric::Auc,
            ProblemType::Multiclass { .. } => Metric::LogLoss,
            ProblemType::Regression => Metric::Mse,
        }
    }

    /// Checks the metric is usable for `problem`.
    pub fn check_problem(self, problem: ProblemType) -> Result<()> {
        let ok = match self {
            Metric::Auc | Metric::Gini => problem == ProblemType::Binary,
            Metric::LogLoss | Metric::Accuracy => problem.is_classification(),
            _ => !problem.is_classification(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UndefinedMetric(format!("{} is not defined for {problem:?} tasks", self.name())))
        }
    }

    pub fn score(self, predictions: &Array2<f64>, targets: &Targets) -> Result<f64> {
        if predictions.nrows() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} prediction rows for {} targets",
                predictions.nrows(),
                targets.len()
            )));
        }
        if targets.is_empty() {
            return Err(Error::UndefinedMetric("no rows to score".into()));
        }
        match (self, targets) {
            (Metric::Auc, Targets::Classes { labels, num_classes }) => {
                binary_scores(predictions, *num_classes).and_then(|s| auc(&s, labels))
            }
            (Metric::Gini, Targets::Classes { labels, num_classes }) => {
                binary_scores(predictions, *num_classes).and_then(|s| auc(&s, labels)).map(|a| 2.0 * a - 1.0)
            }
            (Metric::LogLoss, Targets::Classes { labels, .. }) => Ok(log_loss(predictions, labels)),
            (Metric::Accuracy, Targets::Classes { labels, .. }) => Ok(accuracy(predictions, labels)),
            (Metric::Mse, Targets::Values(y)) => Ok(mean(y, predictions, |p, t| (p - t).powi(2))),
            (Metric::Mae, Targets::Values(y)) => Ok(mean(y, predictions, |p, t| (p - t).abs())),
            (Metric::Rmsle, Targets::Values(y)) => rmsle(predictions, y),
            (Metric::R2, Targets::Values(y)) => Ok(r2(predictions, y)),
            _ => Err(Error::UndefinedMetric(format!(
                "{} does not apply to {} targets",
                self.name(),
                if targets.is_classification() { "class" } else { "real-valued" }
            ))),
        }
    }

    /// Lower-is-better form: `1 - score` for higher-is-better metrics.
    pub fn loss(self, predictions: &Array2<f64>, targets: &Targets) -> Result<f64> {
        let s = self.score(predictions, targets)?;
        Ok(if self.higher_is_better() { 1.0 - s } else { s })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ALL_METRICS
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric `{s}`")))
    }
}

fn binary_scores(predictions: &Array2<f64>, num_classes: usize) -> Result<Vec<f64>> {
    if num_classes != 2 {
        return Err(Error::UndefinedMetric("auc is only defined for binary tasks".into()));
    }
    Ok(match predictions.ncols() {
        1 => predictions.column(0).to_vec(),
        _ => predictions.column(1).to_vec(),
    })
}

/// Area under the ROC curve for positive class 1, counting tied scores as
/// half-concordant (mean-rank form of the Mann-Whitney statistic).
pub fn auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("auc needs both classes among the targets".into()));
    }
    let ranks = mean_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// 1-based ranks in ascending order; tied values share their mean rank.
pub fn mean_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn log_loss(predictions: &Array2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| -predictions[[r, l]].clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP).ln())
        .sum();
    total / labels.len() as f64
}

/// Fraction of rows whose highest-probability class (lowest index on ties)
/// is the true class.
pub fn accuracy(predictions: &Array2<f64>, labels: &[usize]) -> f64 {
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(r, &l)| argmax(predictions.row(*r).iter().copied()) == l)
        .count();
    hits as f64 / labels.len() as f64
}

pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn mean(y: &[f64], predictions: &Array2<f64>, f: impl Fn(f64, f64) -> f64) -> f64 {
    y.iter().enumerate().map(|(r, &t)| f(predictions[[r, 0]], t)).sum::<f64>() / y.len() as f64
}

pub fn rmsle(predictions: &Array2<f64>, y: &[f64]) -> Result<f64> {
    if y.iter().any(|&t| t < 0.0) || predictions.column(0).iter().any(|&p| p <= -1.0) {
        return Err(Error::MetricDomain("rmsle requires nonnegative targets".into()));
    }
    Ok(mean(y, predictions, |p, t| (p.ln_1p() - t.ln_1p()).powi(2)).sqrt())
}

/// Coefficient of determination against the mean of the evaluated targets.
pub fn r2(predictions: &Array2<f64>, y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|t| (t - m).powi(2)).sum();
    let ss_res: f64 = y.iter().enumerate().map(|(r, t)| (predictions[[r, 0]] - t).powi(2)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetTransform {
    Identity,
    Log1p,
}

impl TargetTransform {
    pub fn forward(self, y: f64) -> f64 {
        match self {
            TargetTransform::Identity => y,
            TargetTransform::Log1p => y.ln_1p(),
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            TargetTransform::Identity => y,
            TargetTransform::Log1p => y.exp_m1(),
        }
    }

    pub fn forward_targets(self, targets: &Targets) -> Result<Targets> {
        match (self, targets) {
            (TargetTransform::Identity, t) => Ok(t.clone()),
            (TargetTransform::Log1p, Targets::Values(v)) => {
                if v.iter().any(|&t| t < 0.0) {
                    return Err(Error::MetricDomain("rmsle requires nonnegative targets".into()));
                }
                Ok(Targets::Values(v.iter().map(|&t| self.forward(t)).collect()))
            }
            (TargetTransform::Log1p, _) => Err(Error::UndefinedMetric("log transform needs real targets".into())),
        }
    }

    pub fn inverse_predictions(self, predictions: &Array2<f64>) -> Array2<f64> {
        predictions.mapv(|p| self.inverse(p))
    }
}

/// Requested metric mapped to the metric optimized internally, with the
/// target transform applied before training and undone after prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrappedMetric {
    pub requested: Metric,
    pub internal: Metric,
    pub transform: TargetTransform,
}

pub fn wrap_metric(requested: Metric) -> WrappedMetric {
    let (internal, transform) = match requested {
        Metric::Gini => (Metric::Auc, TargetTransform::Identity),
        Metric::Rmsle => (Metric::Mse, TargetTransform::Log1p),
        m => (m, TargetTransform::Identity),
    };
    WrappedMetric {
        requested,
        internal,
        transform,
    }
}

impl WrappedMetric {
    /// Scores predictions made on the internal scale against raw targets,
    /// reporting the requested metric.
    pub fn score_internal(&self, internal_predictions: &Array2<f64>, raw_targets: &Targets) -> Result<f64> {
        let preds = self.transform.inverse_predictions(internal_predictions);
        self.requested.score(&preds, raw_targets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn classes(labels: &[usize], k: usize) -> Targets {
        Targets::Classes {
            labels: labels.to_vec(),
            num_classes: k,
        }
    }

    #[test]
    fn perfect_ranking_has_unit_auc() {
        let p = array![[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9]];
        assert_eq!(Metric::Auc.score(&p, &classes(&[0, 0, 1, 1], 2)).unwrap(), 1.0);
        assert_eq!(Metric::Gini.score(&p, &classes(&[0, 0, 1, 1], 2)).unwrap(), 1.0);
    }

    #[test]
    fn single_class_auc_is_undefined() {
        let p = array![[0.5, 0.5], [0.4, 0.6]];
        assert!(matches!(Metric::Auc.score(&p, &classes(&[1, 1], 2)), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn uniform_log_loss_is_ln_c() {
        let p = Array2::from_elem((5, 4), 0.25);
        let v = Metric::LogLoss.score(&p, &classes(&[0, 1, 2, 3, 1], 4)).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gini_of_auc_three_quarters() {
        // one discordant pair of four
        let p = array![[0.0, 0.1], [0.0, 0.2], [0.0, 0.3], [0.0, 0.8]];
        let t = classes(&[0, 1, 0, 1], 2);
        assert!((Metric::Auc.score(&p, &t).unwrap() - 0.75).abs() < 1e-12);
        assert!((Metric::Gini.score(&p, &t).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rmsle_rejects_negative_targets() {
        let p = array![[1.0]];
        assert!(matches!(Metric::Rmsle.score(&p, &Targets::Values(vec![-1.0])), Err(Error::MetricDomain(_))));
        assert!(wrap_metric(Metric::Rmsle)
            .transform
            .forward_targets(&Targets::Values(vec![-2.0]))
            .is_err());
    }

    #[test]
    fn losses_flip_higher_is_better() {
        let p = array![[0.2, 0.8], [0.6, 0.4]];
        let t = classes(&[1, 0], 2);
        assert_eq!(Metric::Accuracy.loss(&p, &t).unwrap(), 0.0);
        assert_eq!(Metric::Auc.loss(&p, &t).unwrap(), 0.0);
    }

    #[test]
    fn metric_names_roundtrip() {
        for m in ALL_METRICS {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("f1".parse::<Metric>().is_err());
    }
}
