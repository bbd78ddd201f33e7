//! Base-learner roster behind one fit/predict interface.

pub mod forest;
pub mod gbm;
pub mod knn;
pub mod linear;
pub mod tree;

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{NetConfig, NetHyperparameters, NetInput, TabularNet};
use crate::preprocess::{FeatureMatrix, ModelInput, SpecificTransform, TransformFamily};
use crate::task::Targets;

use forest::{Forest, ForestParams};
use gbm::{BoostedTrees, GbmParams};
use knn::{Knn, KnnParams};
use linear::{LinearModel, LinearParams};

/// Point in time after which iterative learners stop adding work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deadline(Option<Instant>);

impl Deadline {
    pub fn unlimited() -> Self {
        Deadline(None)
    }

    pub fn at(instant: Instant) -> Self {
        Deadline(Some(instant))
    }

    pub fn after_seconds(seconds: f64) -> Self {
        Deadline(Some(Instant::now() + Duration::from_secs_f64(seconds.max(0.0))))
    }

    pub fn expired(&self) -> bool {
        self.0.is_some_and(|t| Instant::now() >= t)
    }

    /// Seconds left, `None` when unlimited.
    pub fn remaining_seconds(&self) -> Option<f64> {
        self.0.map(|t| t.saturating_duration_since(Instant::now()).as_secs_f64())
    }

    pub fn earliest(self, other: Deadline) -> Deadline {
        match (self.0, other.0) {
            (Some(a), Some(b)) => Deadline(Some(a.min(b))),
            (a, b) => Deadline(a.or(b)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LearnerFamily {
    RandomForest,
    ExtraTrees,
    GradientBoostedTrees,
    LinearModel,
    KNearestNeighbors,
    TabularNet,
    /// Predicts the training prior; not part of the default roster.
    Constant,
}

pub const DEFAULT_ROSTER: [LearnerFamily; 6] = [
    LearnerFamily::RandomForest,
    LearnerFamily::ExtraTrees,
    LearnerFamily::GradientBoostedTrees,
    LearnerFamily::LinearModel,
    LearnerFamily::KNearestNeighbors,
    LearnerFamily::TabularNet,
];

impl LearnerFamily {
    pub fn name(self) -> &'static str {
        match self {
            LearnerFamily::RandomForest => "random_forest",
            LearnerFamily::ExtraTrees => "extra_trees",
            LearnerFamily::GradientBoostedTrees => "gbm",
            LearnerFamily::LinearModel => "linear",
            LearnerFamily::KNearestNeighbors => "knn",
            LearnerFamily::TabularNet => "tabular_net",
            LearnerFamily::Constant => "constant",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        DEFAULT_ROSTER
            .into_iter()
            .chain([LearnerFamily::Constant])
            .find(|f| f.name() == name)
    }

    pub fn transform_family(self) -> TransformFamily {
        match self {
            LearnerFamily::RandomForest
            | LearnerFamily::ExtraTrees
            | LearnerFamily::GradientBoostedTrees
            | LearnerFamily::Constant => TransformFamily::Tree,
            LearnerFamily::LinearModel | LearnerFamily::KNearestNeighbors => TransformFamily::Dense,
            LearnerFamily::TabularNet => TransformFamily::Neural,
        }
    }

    /// Seconds per (row x column) cell assumed before any timing is known.
    pub fn default_cost_per_cell(self) -> f64 {
        match self {
            LearnerFamily::RandomForest => 1.2e-5,
            LearnerFamily::ExtraTrees => 5e-6,
            LearnerFamily::GradientBoostedTrees => 4e-5,
            LearnerFamily::LinearModel => 2e-6,
            LearnerFamily::KNearestNeighbors => 1e-6,
            LearnerFamily::TabularNet => 2e-5,
            LearnerFamily::Constant => 1e-9,
        }
    }

    pub fn default_spec(self) -> LearnerSpec {
        let params = match self {
            LearnerFamily::RandomForest => LearnerParams::Forest(ForestParams::random_forest()),
            LearnerFamily::ExtraTrees => LearnerParams::Forest(ForestParams::extra_trees()),
            LearnerFamily::GradientBoostedTrees => LearnerParams::Gbm(GbmParams::default()),
            LearnerFamily::LinearModel => LearnerParams::Linear(LinearParams::default()),
            LearnerFamily::KNearestNeighbors => LearnerParams::Knn(KnnParams::default()),
            LearnerFamily::TabularNet => LearnerParams::Net(NetHyperparameters::default()),
            LearnerFamily::Constant => LearnerParams::Constant,
        };
        LearnerSpec { family: self, params }
    }
}

impl fmt::Display for LearnerFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnerParams {
    Forest(ForestParams),
    Gbm(GbmParams),
    Linear(LinearParams),
    Knn(KnnParams),
    Net(NetHyperparameters),
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub family: LearnerFamily,
    pub params: LearnerParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Forest(Forest),
    Gbm(BoostedTrees),
    Linear(LinearModel),
    Knn(Knn),
    Net(TabularNet),
    Constant(Array1<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub family: LearnerFamily,
    pub out_dim: usize,
    pub training_seconds: f64,
    pub seed: u64,
    pub transform: SpecificTransform,
    pub model: ModelParams,
}

/// JSON description stored next to each model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub family: LearnerFamily,
    pub out_dim: usize,
    pub input_width: usize,
    pub training_seconds: f64,
    pub seed: u64,
    pub net_config: Option<NetConfig>,
}

const MODEL_MAGIC: &[u8; 4] = b"TSMD";
const MODEL_VERSION: u32 = 1;

fn learner_input(family: LearnerFamily, input: &ModelInput) -> Array2<f64> {
    match family.transform_family() {
        TransformFamily::Tree => input.one_hot_expanded(),
        _ => input.dense.clone(),
    }
}

fn prior(targets: &Targets) -> Array1<f64> {
    let p = targets.as_prediction();
    p.mean_axis(ndarray::Axis(0)).unwrap_or_else(|| Array1::zeros(p.ncols()))
}

/// Fits one model. `holdout` drives early stopping for boosting and the
/// network; the model-specific transform is fitted on `features` only.
pub fn fit(
    spec: &LearnerSpec,
    features: &FeatureMatrix,
    targets: &Targets,
    holdout: Option<(&FeatureMatrix, &Targets)>,
    deadline: &Deadline,
    seed: u64,
) -> Result<TrainedModel> {
    if features.rows() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows but {} targets",
            features.rows(),
            targets.len()
        )));
    }
    if deadline.expired() {
        return Err(Error::ModelUnavailable(format!("no time left to train {}", spec.family)));
    }
    let start = Instant::now();
    let transform = SpecificTransform::fit(features, spec.family.transform_family());
    let input = transform.apply(features)?;
    let hold_input = holdout
        .map(|(h, t)| transform.apply(h).map(|i| (i, t)))
        .transpose()?;
    let x = learner_input(spec.family, &input);
    let model = match &spec.params {
        LearnerParams::Forest(p) => ModelParams::Forest(Forest::fit(&x, targets, p, deadline, seed)?),
        LearnerParams::Gbm(p) => {
            let hx = hold_input.as_ref().map(|(i, t)| (learner_input(spec.family, i), *t));
            let hold = hx.as_ref().map(|(x, t)| (x, *t));
            ModelParams::Gbm(BoostedTrees::fit(&x, targets, hold, p, deadline)?)
        }
        LearnerParams::Linear(p) => ModelParams::Linear(LinearModel::fit(&x, targets, p, deadline)),
        LearnerParams::Knn(p) => ModelParams::Knn(Knn::fit(&x, targets, p)),
        LearnerParams::Net(p) => {
            let data = NetInput {
                numeric: &input.dense,
                codes: &input.codes,
            };
            let hold = hold_input.as_ref().map(|(i, t)| {
                (
                    NetInput {
                        numeric: &i.dense,
                        codes: &i.codes,
                    },
                    *t,
                )
            });
            ModelParams::Net(TabularNet::fit(
                data,
                &input.code_cardinalities,
                targets,
                hold,
                p,
                deadline,
                seed,
            )?)
        }
        LearnerParams::Constant => ModelParams::Constant(prior(targets)),
    };
    Ok(TrainedModel {
        family: spec.family,
        out_dim: targets.output_dim(),
        training_seconds: start.elapsed().as_secs_f64(),
        seed,
        transform,
        model,
    })
}

impl TrainedModel {
    pub fn input_width(&self) -> usize {
        self.transform.input_width()
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Result<Array2<f64>> {
        let input = self.transform.apply(features)?;
        if input.rows() == 0 {
            return Ok(Array2::zeros((0, self.out_dim)));
        }
        let x = || learner_input(self.family, &input);
        Ok(match &self.model {
            ModelParams::Forest(m) => m.predict(&x()),
            ModelParams::Gbm(m) => m.predict(&x()),
            ModelParams::Linear(m) => m.predict(&x()),
            ModelParams::Knn(m) => m.predict(&x()),
            ModelParams::Net(m) => m.predict(&input.dense, &input.codes),
            ModelParams::Constant(p) => {
                let mut out = Array2::zeros((input.rows(), p.len()));
                out.rows_mut().into_iter().for_each(|mut r| r.assign(p));
                out
            }
        })
    }

    pub fn sidecar(&self) -> ModelSidecar {
        ModelSidecar {
            family: self.family,
            out_dim: self.out_dim,
            input_width: self.input_width(),
            training_seconds: self.training_seconds,
            seed: self.seed,
            net_config: match &self.model {
                ModelParams::Net(n) => Some(n.config.clone()),
                _ => None,
            },
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = MODEL_MAGIC.to_vec();
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend(bincode::serialize(self)?);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
            return Err(Error::CorruptCheckpoint("model file has no valid header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(Error::CorruptCheckpoint(format!("unsupported model version {version}")));
        }
        Ok(bincode::deserialize(&bytes[8..])?)
    }

    /// Writes `path` (binary) and `path` with a `.json` extension (sidecar).
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes()?)?;
        let sidecar = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(path.with_extension("json"), sidecar)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|_| Error::CorruptCheckpoint(format!("missing model file {}", path.display())))?
            .read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Observed training time of one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub family: LearnerFamily,
    pub rows: usize,
    pub cols: usize,
    pub seconds: f64,
}

/// Predicted fit time `c * rows * cols`, with `c` fitted by least squares
/// through the origin on same-family history, or a per-family default.
pub fn estimate_fit_seconds(
    family: LearnerFamily,
    rows: usize,
    cols: usize,
    history: &[FitRecord],
) -> f64 {
    let cells = (rows.max(1) * cols.max(1)) as f64;
    let (sxy, sxx) = history
        .iter()
        .filter(|r| r.family == family)
        .map(|r| ((r.rows.max(1) * r.cols.max(1)) as f64, r.seconds))
        .fold((0.0, 0.0), |(sxy, sxx), (x, s)| (sxy + x * s, sxx + x * x));
    let c = if sxx > 0.0 && sxy > 0.0 {
        sxy / sxx
    } else {
        family.default_cost_per_cell()
    };
    (c * cells).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_order_is_fixed() {
        let mut sorted = DEFAULT_ROSTER;
        sorted.sort();
        assert_eq!(sorted, DEFAULT_ROSTER);
        for f in DEFAULT_ROSTER {
            assert_eq!(LearnerFamily::from_name(f.name()), Some(f));
        }
    }

    #[test]
    fn estimate_extrapolates_linearly() {
        let h = [FitRecord {
            family: LearnerFamily::RandomForest,
            rows: 1000,
            cols: 10,
            seconds: 2.0,
        }];
        let e = estimate_fit_seconds(LearnerFamily::RandomForest, 2000, 10, &h);
        assert!((e - 4.0).abs() < 1e-12);
        let e = estimate_fit_seconds(LearnerFamily::ExtraTrees, 2000, 10, &h);
        assert!(e > 0.0 && e.is_finite());
    }

    #[test]
    fn expired_deadline_is_unavailable() {
        let fm = FeatureMatrix::numeric_only(Array2::zeros((4, 1)));
        let t = Targets::Values(vec![1.0; 4]);
        let past = Deadline::at(Instant::now() - Duration::from_millis(1));
        let err = fit(&LearnerFamily::Constant.default_spec(), &fm, &t, None, &past, 0).unwrap_err();
        assert!(matches!(err, Error::ModelUnavailable(_)));
    }
}
