//! On-disk predictor: metadata, preprocessing, fold models, OOF matrices and
//! ensemble weights.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::checkpoint::{write_atomic, Checkpoint, Entry};
use super::StackPlan;
use crate::ensemble::{build_stack_features, ensemble_selection, BaggedModelGroup, FoldModel, WeightedEnsemble};
use crate::error::{Error, Result};
use crate::learners::{LearnerFamily, TrainedModel};
use crate::metrics::{argmax, WrappedMetric};
use crate::preprocess::{AgnosticTransform, FeatureMatrix};
use crate::schema::{ProblemType, TabularDataset};
use crate::task::{LabelEncoder, Targets};

pub const METADATA_FILE: &str = "metadata.json";
pub const SCHEMA_FILE: &str = "schema.json";
pub const AGNOSTIC_FILE: &str = "preprocess/agnostic.json";
pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const LEADERBOARD_FILE: &str = "leaderboard.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub format_version: u32,
    pub version: String,
    pub label: String,
    pub problem: ProblemType,
    pub metric: WrappedMetric,
    pub encoder: LabelEncoder,
    pub plan: StackPlan,
    pub root_seed: u64,
    pub train_path: Option<String>,
    /// SHA-256 over the training table's headers and cells.
    pub train_fingerprint: String,
    pub rows: usize,
    pub base_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub layer: usize,
    pub families: Vec<LearnerFamily>,
    pub selection_rows: usize,
    pub ensemble: WeightedEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub model: String,
    pub layer: usize,
    /// Loss of the OOF predictions under the internal metric.
    pub validation_loss: f64,
    pub fold_models: usize,
    pub repeats: usize,
    pub fit_seconds: f64,
    pub ensemble_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OofHeader {
    pub rows: usize,
    pub out_dim: usize,
    pub repeats_completed: usize,
    pub covered_rows: usize,
}

pub fn model_rel_path(layer: usize, family: LearnerFamily, repeat: usize, fold: usize) -> String {
    format!("layer{layer}/{}/r{repeat}_f{fold}.model", family.name())
}

pub fn oof_rel_path(layer: usize, family: LearnerFamily) -> String {
    format!("oof/layer{layer}_{}.bin", family.name())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::CorruptCheckpoint(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::CorruptCheckpoint(format!("unparseable {}: {e}", path.display())))
}

pub fn write_oof(dir: &Path, group: &BaggedModelGroup) -> Result<()> {
    let rel = oof_rel_path(group.layer, group.family);
    let path = dir.join(&rel);
    std::fs::create_dir_all(path.parent().unwrap())?;
    let bytes = bincode::serialize(&(&group.oof_sum, &group.oof_count))?;
    write_atomic(&path, &bytes)?;
    let header = OofHeader {
        rows: group.oof_sum.nrows(),
        out_dim: group.out_dim,
        repeats_completed: group.repeats_started(),
        covered_rows: group.covered_rows().len(),
    };
    write_json(&path.with_extension("json"), &header)
}

fn read_oof(dir: &Path, layer: usize, family: LearnerFamily) -> Result<(Array2<f64>, Vec<u32>)> {
    let path = dir.join(oof_rel_path(layer, family));
    let bytes = std::fs::read(&path)
        .map_err(|_| Error::CorruptCheckpoint(format!("missing OOF file {}", path.display())))?;
    Ok(bincode::deserialize(&bytes)?)
}

/// Rebuilds a closed layer's group from the fold models listed in the log.
pub fn load_group(dir: &Path, cp: &Checkpoint, layer: usize, family: LearnerFamily) -> Result<BaggedModelGroup> {
    let mut folds: Vec<(usize, usize, String)> = cp
        .entries
        .iter()
        .filter_map(|e| match e {
            Entry::FoldCompleted {
                layer: l,
                family: f,
                repeat,
                fold,
                path,
                ..
            } if *l == layer && *f == family => Some((*repeat, *fold, path.clone())),
            _ => None,
        })
        .collect();
    folds.sort();
    let (oof_sum, oof_count) = read_oof(dir, layer, family)?;
    let mut models = Vec::with_capacity(folds.len());
    for (repeat, fold, path) in folds {
        let model = TrainedModel::load(&dir.join(&path))?;
        models.push(FoldModel { repeat, fold, model });
    }
    let out_dim = oof_sum.ncols();
    Ok(BaggedModelGroup {
        family,
        layer,
        out_dim,
        models,
        oof_sum,
        oof_count,
    })
}

/// Predictions on the original label scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub problem: ProblemType,
    pub classes: Vec<String>,
    /// Class probabilities, or a single column of values.
    pub values: Array2<f64>,
    /// Predicted class names, or formatted values for regression.
    pub labels: Vec<String>,
}

impl Predictions {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    /// Label column first, then one `prob_<class>` column per class.
    pub fn write_csv(&self, path: &Path, label: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![label.to_string()];
        if self.problem.is_classification() {
            header.extend(self.classes.iter().map(|c| format!("prob_{c}")));
        }
        w.write_record(&header)?;
        for (r, l) in self.labels.iter().enumerate() {
            let mut rec = vec![l.clone()];
            if self.problem.is_classification() {
                rec.extend(self.values.row(r).iter().map(|p| p.to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A trained predictor loaded in memory.
#[derive(Debug, Clone)]
pub struct PredictorBundle {
    pub dir: PathBuf,
    pub metadata: Metadata,
    pub agnostic: AgnosticTransform,
    /// `layers[l - 1]` holds the groups of stack layer `l`.
    pub layers: Vec<Vec<BaggedModelGroup>>,
    pub ensemble: EnsembleRecord,
    pub leaderboard: Vec<LeaderboardEntry>,
    pub checkpoint: Checkpoint,
}

impl PredictorBundle {
    pub fn load(dir: &Path) -> Result<Self> {
        let metadata: Metadata = read_json(&dir.join(METADATA_FILE))?;
        if metadata.format_version != FORMAT_VERSION {
            return Err(Error::CorruptCheckpoint(format!(
                "unsupported bundle format {}",
                metadata.format_version
            )));
        }
        let checkpoint = Checkpoint::load(dir)?;
        if !checkpoint.is_finished() {
            return Err(Error::CorruptCheckpoint(
                "training has not finished; continue training first".into(),
            ));
        }
        checkpoint.verify(dir)?;
        let agnostic: AgnosticTransform = read_json(&dir.join(AGNOSTIC_FILE))?;
        let ensemble: EnsembleRecord = read_json(&dir.join(ENSEMBLE_FILE))?;
        let mut layers = Vec::new();
        for layer in 1..=ensemble.layer {
            let families = checkpoint
                .layer_closed(layer)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("layer {layer} was never closed")))?
                .to_vec();
            let groups = families
                .iter()
                .map(|&f| load_group(dir, &checkpoint, layer, f))
                .collect::<Result<Vec<_>>>()?;
            layers.push(groups);
        }
        let leaderboard = read_json(&dir.join(LEADERBOARD_FILE)).unwrap_or_default();
        Ok(PredictorBundle {
            dir: dir.to_path_buf(),
            metadata,
            agnostic,
            layers,
            ensemble,
            leaderboard,
            checkpoint,
        })
    }

    pub fn final_groups(&self) -> &[BaggedModelGroup] {
        &self.layers[self.ensemble.layer - 1]
    }

    /// Every trained fold model, bottom layer first.
    pub fn models(&self) -> impl Iterator<Item = &FoldModel> {
        self.layers.iter().flatten().flat_map(|g| g.models.iter())
    }

    pub fn features(&self, data: &TabularDataset) -> Result<FeatureMatrix> {
        self.agnostic.apply(data)
    }

    /// Each layer's group predictions, bottom-up, on the internal target scale.
    pub fn layer_predictions(&self, base: &FeatureMatrix) -> Result<Vec<Vec<Array2<f64>>>> {
        let mut out: Vec<Vec<Array2<f64>>> = Vec::new();
        for (i, groups) in self.layers.iter().enumerate() {
            let input = match out.last() {
                None => base.clone(),
                Some(prev) => {
                    let blocks: Vec<_> = self.layers[i - 1]
                        .iter()
                        .zip(prev)
                        .map(|(g, p)| (g.layer, g.family, p))
                        .collect();
                    build_stack_features(base, &blocks)?
                }
            };
            out.push(groups.iter().map(|g| g.predict(&input)).collect::<Result<Vec<_>>>()?);
        }
        Ok(out)
    }

    /// Ensemble output on the internal scale (before the inverse target transform).
    pub fn predict_internal(&self, base: &FeatureMatrix) -> Result<Array2<f64>> {
        let preds = self.layer_predictions(base)?;
        Ok(self.ensemble.ensemble.combine(preds.last().expect("at least one layer")))
    }

    pub fn predict(&self, data: &TabularDataset) -> Result<Predictions> {
        let base = self.features(data)?;
        let internal = self.predict_internal(&base)?;
        let values = self.metadata.metric.transform.inverse_predictions(&internal);
        let encoder = &self.metadata.encoder;
        let labels = if self.metadata.problem.is_classification() {
            values
                .rows()
                .into_iter()
                .map(|r| encoder.decode(argmax(r.iter().copied())).to_string())
                .collect()
        } else {
            values.column(0).iter().map(|v| v.to_string()).collect()
        };
        Ok(Predictions {
            problem: self.metadata.problem,
            classes: encoder.classes.clone(),
            values,
            labels,
        })
    }

    /// Raw-scale targets of a labeled dataset.
    pub fn targets(&self, data: &TabularDataset) -> Result<Targets> {
        let label = data
            .label()
            .ok_or_else(|| Error::InvalidArgument("dataset has no label column".into()))?;
        self.metadata.encoder.encode(&label.values)
    }

    /// Score of the requested metric on a labeled dataset.
    pub fn evaluate(&self, data: &TabularDataset) -> Result<f64> {
        let targets = self.targets(data)?;
        let preds = self.predict(data)?;
        self.metadata.metric.requested.score(&preds.values, &targets)
    }

    /// Loss of the requested metric (lower is better) on a labeled dataset.
    pub fn evaluate_loss(&self, data: &TabularDataset) -> Result<f64> {
        let targets = self.targets(data)?;
        let preds = self.predict(data)?;
        self.metadata.metric.requested.loss(&preds.values, &targets)
    }

    /// Internal-scale targets of the training rows, for OOF diagnostics.
    pub fn internal_targets(&self, data: &TabularDataset) -> Result<Targets> {
        self.metadata.metric.transform.forward_targets(&self.targets(data)?)
    }

    /// Ensemble selection over one layer's OOF predictions, on the rows
    /// every group covers.
    pub fn layer_selection(&self, layer: usize, internal_targets: &Targets) -> Result<WeightedEnsemble> {
        let groups = self
            .layers
            .get(layer.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidArgument(format!("no layer {layer}")))?;
        select_on_groups(groups, internal_targets, self.metadata.metric, self.metadata.plan.selection_iterations)
            .map(|(e, _)| e)
    }
}

/// Rows that every group has an OOF prediction for.
pub fn common_rows(groups: &[BaggedModelGroup]) -> Vec<usize> {
    let rows = groups.first().map_or(0, |g| g.oof_count.len());
    (0..rows)
        .filter(|&r| groups.iter().all(|g| g.oof_count[r] > 0))
        .collect()
}

pub fn select_on_groups(
    groups: &[BaggedModelGroup],
    targets: &Targets,
    metric: WrappedMetric,
    iterations: usize,
) -> Result<(WeightedEnsemble, usize)> {
    let rows = common_rows(groups);
    if rows.is_empty() {
        return Err(Error::ModelUnavailable("no rows with out-of-fold predictions".into()));
    }
    let preds: Vec<Array2<f64>> = groups.iter().map(|g| g.oof().select(ndarray::Axis(0), &rows)).collect();
    let y = targets.select(&rows);
    let loss = |p: &Array2<f64>| metric.internal.loss(p, &y);
    Ok((ensemble_selection(&preds, &loss, iterations)?, rows.len()))
}
