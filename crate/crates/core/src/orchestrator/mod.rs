//! Budgeted training: layer-by-layer bagged fits in roster order, adaptive
//! repeats, checkpointing after every fold, resume, and final ensemble
//! selection.

pub mod bundle;
pub mod checkpoint;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{
    build_stack_features, fit_fold, make_fold_plan, BaggedModelGroup, FoldObserver, FoldPlan,
    DEFAULT_FOLDS, DEFAULT_SELECTION_ITERATIONS,
};
use crate::error::{Error, Result};
use crate::learners::{
    estimate_fit_seconds, Deadline, FitRecord, LearnerFamily, LearnerSpec, TrainedModel, DEFAULT_ROSTER,
};
use crate::metrics::{wrap_metric, Metric};
use crate::preprocess::{AgnosticTransform, FeatureMatrix};
use crate::rng::derive_seed;
use crate::schema::{infer_problem_type, TabularDataset};
use crate::task::{LabelEncoder, Targets};

use bundle::{
    load_group, model_rel_path, read_json, select_on_groups, write_json, write_oof, EnsembleRecord,
    LeaderboardEntry, Metadata, PredictorBundle, AGNOSTIC_FILE, ENSEMBLE_FILE, FORMAT_VERSION,
    LEADERBOARD_FILE, METADATA_FILE, SCHEMA_FILE,
};
use checkpoint::{sha256_file, Checkpoint, Entry, CHECKPOINT_FILE};

pub const DEFAULT_LAYERS: usize = 2;
pub const DEFAULT_MAX_REPEATS: usize = 20;
const PLAN_SEED_TAG: u64 = 0xF01D;

/// Switches that remove parts of the training strategy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// A single round of k-fold bagging.
    pub no_repeat: bool,
    /// One stack layer.
    pub no_multistack: bool,
    /// One holdout split instead of bagging; implies one layer and one repeat.
    pub no_bag: bool,
    /// Drop the neural network from the roster.
    pub no_network: bool,
}

impl Ablation {
    /// The cumulative variants, each removing one more component.
    pub fn cumulative() -> [(&'static str, Ablation); 5] {
        let none = Ablation::default();
        let r = Ablation { no_repeat: true, ..none };
        let m = Ablation { no_multistack: true, ..r };
        let b = Ablation { no_bag: true, ..m };
        let n = Ablation { no_network: true, ..b };
        [("Full", none), ("NoRepeat", r), ("NoMultiStack", m), ("NoBag", b), ("NoNetwork", n)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackPlan {
    /// Stack layers before the selection output layer.
    pub layers: usize,
    pub k: usize,
    pub max_repeats: usize,
    pub roster: Vec<LearnerSpec>,
    /// Total budget in seconds.
    pub time_limit: f64,
    pub ablation: Ablation,
    pub selection_iterations: usize,
    pub seed: u64,
    /// Requested metric; the problem type's default when absent.
    pub metric: Option<Metric>,
}

impl Default for StackPlan {
    fn default() -> Self {
        StackPlan {
            layers: DEFAULT_LAYERS,
            k: DEFAULT_FOLDS,
            max_repeats: DEFAULT_MAX_REPEATS,
            roster: DEFAULT_ROSTER.iter().map(|f| f.default_spec()).collect(),
            time_limit: 3600.0,
            ablation: Ablation::default(),
            selection_iterations: DEFAULT_SELECTION_ITERATIONS,
            seed: 0,
            metric: None,
        }
    }
}

/// Plan after applying the ablation switches.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivePlan {
    pub layers: usize,
    pub k: usize,
    /// Folds actually trained per repeat (1 for a single holdout split).
    pub folds_fitted: usize,
    pub max_repeats: usize,
    pub roster: Vec<LearnerSpec>,
    pub layer_budget: f64,
}

impl StackPlan {
    pub fn effective(&self) -> Result<EffectivePlan> {
        if self.layers == 0 {
            return Err(Error::InvalidArgument("at least one stack layer is required".into()));
        }
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!("k must be at least 2, got {}", self.k)));
        }
        if self.max_repeats == 0 || self.selection_iterations == 0 {
            return Err(Error::InvalidArgument("repeats and selection iterations must be positive".into()));
        }
        if !(self.time_limit > 0.0) || !self.time_limit.is_finite() {
            return Err(Error::InvalidArgument(format!("time limit must be positive, got {}", self.time_limit)));
        }
        let a = self.ablation;
        let roster: Vec<LearnerSpec> = self
            .roster
            .iter()
            .filter(|s| !(a.no_network && s.family == LearnerFamily::TabularNet))
            .cloned()
            .collect();
        if roster.is_empty() {
            return Err(Error::InvalidArgument("the learner roster is empty".into()));
        }
        let layers = if a.no_multistack || a.no_bag { 1 } else { self.layers };
        Ok(EffectivePlan {
            layers,
            k: self.k,
            folds_fitted: if a.no_bag { 1 } else { self.k },
            max_repeats: if a.no_repeat || a.no_bag { 1 } else { self.max_repeats },
            roster,
            layer_budget: self.time_limit / layers as f64,
        })
    }
}

/// Hooks for tests and front ends.
#[derive(Default)]
pub struct FitOptions<'a> {
    pub observer: Option<&'a mut dyn FoldObserver>,
    /// Stop with [`Error::Interrupted`] once this many folds were fitted in
    /// this session (simulates a crash).
    pub stop_after_fits: Option<usize>,
    /// Recorded so training can be resumed without re-specifying the data.
    pub train_path: Option<PathBuf>,
}

pub fn dataset_fingerprint(data: &TabularDataset) -> String {
    let mut h = Sha256::new();
    for c in data.columns().iter().chain(data.label()) {
        h.update(c.name.as_bytes());
        h.update([0xff]);
        for v in &c.values {
            match v {
                Some(s) => {
                    h.update([1]);
                    h.update((s.len() as u64).to_le_bytes());
                    h.update(s.as_bytes());
                }
                None => h.update([0]),
            }
        }
    }
    hex::encode(h.finalize())
}

/// Encoded raw-scale targets of the training label.
fn training_targets(data: &TabularDataset, encoder: &LabelEncoder) -> Result<Targets> {
    let label = data
        .label()
        .ok_or_else(|| Error::InvalidArgument("a label column is required for training".into()))?;
    let missing = label.missing_count();
    if missing > 0 {
        return Err(Error::MissingLabels { count: missing });
    }
    encoder.encode(&label.values)
}

/// Trains a new predictor into `dir` (which must not hold one already).
pub fn fit(train: &TabularDataset, plan: &StackPlan, dir: &Path, options: FitOptions) -> Result<PredictorBundle> {
    let effective = plan.effective()?;
    if dir.join(CHECKPOINT_FILE).exists() {
        return Err(Error::InvalidArgument(format!(
            "{} already holds a predictor; continue training or choose another directory",
            dir.display()
        )));
    }
    let label = train
        .label()
        .ok_or_else(|| Error::InvalidArgument("a label column is required for training".into()))?;
    let missing = label.missing_count();
    if missing > 0 {
        return Err(Error::MissingLabels { count: missing });
    }
    let problem = infer_problem_type(&label.values)?;
    let metric = plan.metric.unwrap_or_else(|| Metric::default_for(problem));
    metric.check_problem(problem)?;
    let wrapped = wrap_metric(metric);
    let encoder = LabelEncoder::fit(problem, &label.values);
    let raw_targets = training_targets(train, &encoder)?;
    let targets = wrapped.transform.forward_targets(&raw_targets)?;
    if train.row_count() < effective.k {
        return Err(Error::FoldCount {
            rows: train.row_count(),
            k: effective.k,
        });
    }

    let agnostic = AgnosticTransform::fit(train);
    let base = agnostic.apply(train)?;
    std::fs::create_dir_all(dir.join("preprocess"))?;
    let metadata = Metadata {
        format_version: FORMAT_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        label: label.name.clone(),
        problem,
        metric: wrapped,
        encoder,
        plan: plan.clone(),
        root_seed: plan.seed,
        train_path: options
            .train_path
            .as_ref()
            .map(|p| std::fs::canonicalize(p).unwrap_or_else(|_| p.clone()).display().to_string()),
        train_fingerprint: dataset_fingerprint(train),
        rows: train.row_count(),
        base_width: base.width(),
    };
    write_json(&dir.join(METADATA_FILE), &metadata)?;
    write_json(&dir.join(SCHEMA_FILE), &train.schema())?;
    write_json(&dir.join(AGNOSTIC_FILE), &agnostic)?;
    let cp = Checkpoint::new(plan.seed);
    cp.save(dir)?;
    log::info!(
        "fitting {:?} task on {} rows x {} features; metric {}",
        problem,
        train.row_count(),
        base.width(),
        metric
    );
    Trainer::new(dir, effective, metadata, agnostic, base, targets, cp, options).run()
}

/// Continues an interrupted fit in `dir`. Completed folds are loaded, never
/// refit. `train` defaults to the recorded training file.
pub fn resume(dir: &Path, train: Option<&TabularDataset>, options: FitOptions) -> Result<PredictorBundle> {
    let metadata: Metadata = read_json(&dir.join(METADATA_FILE))?;
    let cp = Checkpoint::load(dir)?;
    cp.verify(dir)?;
    if cp.is_finished() {
        log::info!("training in {} is already complete", dir.display());
        return PredictorBundle::load(dir);
    }
    let loaded;
    let train = match train {
        Some(t) => t,
        None => {
            let path = metadata.train_path.as_ref().ok_or_else(|| {
                Error::InvalidArgument("no training file recorded; supply the training data".into())
            })?;
            loaded = TabularDataset::load_csv(path, Some(&metadata.label))?;
            &loaded
        }
    };
    if dataset_fingerprint(train) != metadata.train_fingerprint {
        return Err(Error::SchemaMismatch(
            "training data differs from the data the predictor was started on".into(),
        ));
    }
    let agnostic: AgnosticTransform = read_json(&dir.join(AGNOSTIC_FILE))?;
    let base = agnostic.apply(train)?;
    let raw = training_targets(train, &metadata.encoder)?;
    let targets = metadata.metric.transform.forward_targets(&raw)?;
    let effective = metadata.plan.effective()?;
    Trainer::new(dir, effective, metadata, agnostic, base, targets, cp, options).run()
}

struct LayerClock {
    start: Instant,
    offset: f64,
    budget: f64,
}

impl LayerClock {
    fn elapsed(&self) -> f64 {
        self.offset + self.start.elapsed().as_secs_f64()
    }

    fn remaining(&self) -> f64 {
        self.budget - self.elapsed()
    }

    fn deadline(&self) -> Deadline {
        Deadline::at(self.start + Duration::from_secs_f64((self.budget - self.offset).max(0.0)))
    }
}

struct Trainer<'a> {
    dir: PathBuf,
    plan: EffectivePlan,
    metadata: Metadata,
    agnostic: AgnosticTransform,
    base: FeatureMatrix,
    targets: Targets,
    cp: Checkpoint,
    history: Vec<FitRecord>,
    fits_this_session: usize,
    stop_after: Option<usize>,
    observer: Option<&'a mut dyn FoldObserver>,
}

impl<'a> Trainer<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        dir: &Path,
        plan: EffectivePlan,
        metadata: Metadata,
        agnostic: AgnosticTransform,
        base: FeatureMatrix,
        targets: Targets,
        cp: Checkpoint,
        options: FitOptions<'a>,
    ) -> Self {
        Trainer {
            dir: dir.to_path_buf(),
            plan,
            metadata,
            agnostic,
            base,
            targets,
            cp,
            history: Vec::new(),
            fits_this_session: 0,
            stop_after: options.stop_after_fits,
            observer: options.observer,
        }
    }

    fn root(&self) -> u64 {
        self.metadata.root_seed
    }

    fn append(&mut self, entry: Entry) -> Result<()> {
        self.cp.append(&self.dir, entry)
    }

    fn run(mut self) -> Result<PredictorBundle> {
        let mut layers: Vec<Vec<BaggedModelGroup>> = Vec::new();
        for layer in 1..=self.plan.layers {
            let features = match layers.last() {
                None => self.base.clone(),
                Some(prev) => {
                    let oofs: Vec<_> = prev.iter().map(|g| g.oof()).collect();
                    let blocks: Vec<_> = prev.iter().zip(&oofs).map(|(g, o)| (g.layer, g.family, o)).collect();
                    build_stack_features(&self.base, &blocks)?
                }
            };
            let groups = self.run_layer(layer, &features, layers.is_empty())?;
            if groups.is_empty() {
                break;
            }
            layers.push(groups);
        }
        if layers.is_empty() {
            let cheapest = self
                .plan
                .roster
                .iter()
                .map(|s| {
                    let e = estimate_fit_seconds(s.family, self.base.rows(), self.base.width(), &self.history)
                        * self.plan.folds_fitted as f64;
                    (s.family, e)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("roster is not empty");
            return Err(Error::BudgetTooSmall {
                family: cheapest.0.name().to_string(),
                estimate: cheapest.1,
            });
        }
        self.finish(layers)
    }

    fn finish(mut self, layers: Vec<Vec<BaggedModelGroup>>) -> Result<PredictorBundle> {
        let final_layer = layers.len();
        let groups = &layers[final_layer - 1];
        let (ensemble, rows) = select_on_groups(
            groups,
            &self.targets,
            self.metadata.metric,
            self.metadata.plan.selection_iterations,
        )?;
        let record = EnsembleRecord {
            layer: final_layer,
            families: groups.iter().map(|g| g.family).collect(),
            selection_rows: rows,
            ensemble,
        };
        log::info!(
            "ensemble selection on layer {final_layer}: loss {:.5}, weights {:?}",
            record.ensemble.loss,
            record.families.iter().zip(&record.ensemble.weights).collect::<Vec<_>>()
        );
        let leaderboard = self.leaderboard(&layers, &record)?;
        write_json(&self.dir.join(ENSEMBLE_FILE), &record)?;
        write_json(&self.dir.join(LEADERBOARD_FILE), &leaderboard)?;
        self.append(Entry::Finished)?;
        Ok(PredictorBundle {
            dir: self.dir.clone(),
            metadata: self.metadata,
            agnostic: self.agnostic,
            layers,
            ensemble: record,
            leaderboard,
            checkpoint: self.cp,
        })
    }

    fn leaderboard(&self, layers: &[Vec<BaggedModelGroup>], record: &EnsembleRecord) -> Result<Vec<LeaderboardEntry>> {
        let metric = self.metadata.metric.internal;
        let mut out = Vec::new();
        for groups in layers {
            for g in groups {
                let rows = g.covered_rows();
                let oof = g.oof().select(ndarray::Axis(0), &rows);
                let weight = if g.layer == record.layer {
                    record
                        .families
                        .iter()
                        .position(|&f| f == g.family)
                        .map_or(0.0, |i| record.ensemble.weights[i])
                } else {
                    0.0
                };
                out.push(LeaderboardEntry {
                    model: format!("{}_L{}", g.family, g.layer),
                    layer: g.layer,
                    validation_loss: metric.loss(&oof, &self.targets.select(&rows))?,
                    fold_models: g.models.len(),
                    repeats: g.repeats_started(),
                    fit_seconds: g.models.iter().map(|m| m.model.training_seconds).sum(),
                    ensemble_weight: weight,
                });
            }
        }
        out.push(LeaderboardEntry {
            model: "weighted_ensemble".into(),
            layer: record.layer + 1,
            validation_loss: record.ensemble.loss,
            fold_models: 0,
            repeats: 0,
            fit_seconds: 0.0,
            ensemble_weight: 1.0,
        });
        out.sort_by(|a, b| a.validation_loss.total_cmp(&b.validation_loss));
        Ok(out)
    }

    fn fold_plan(&self, layer: usize, repeats: usize) -> Result<FoldPlan> {
        make_fold_plan(
            &self.targets,
            self.plan.k,
            repeats,
            derive_seed(self.root(), &[layer as u64, PLAN_SEED_TAG]),
        )
    }

    /// Fits (or replays from the log) one layer; returns its surviving groups.
    fn run_layer(&mut self, layer: usize, features: &FeatureMatrix, first_layer: bool) -> Result<Vec<BaggedModelGroup>> {
        if let Some(families) = self.cp.layer_closed(layer) {
            let families = families.to_vec();
            return families
                .iter()
                .map(|&f| load_group(&self.dir, &self.cp, layer, f))
                .collect();
        }
        if !self.cp.layer_started(layer) {
            self.append(Entry::LayerStarted { layer })?;
        }
        let clock = LayerClock {
            start: Instant::now(),
            offset: self.cp.layer_elapsed(layer),
            budget: self.plan.layer_budget,
        };
        let deadline = clock.deadline();
        let mut plan = self.fold_plan(layer, 1)?;
        let roster = self.plan.roster.clone();
        let mut groups: Vec<Option<BaggedModelGroup>> = vec![None; roster.len()];
        let mut stopped = false;
        let train_rows = features.rows() * (self.plan.k - 1) / self.plan.k;

        // first repeat, family by family
        for (i, spec) in roster.iter().enumerate() {
            let family = spec.family;
            if self.cp.is_skipped(layer, family) || self.cp.is_discarded(layer, family) {
                continue;
            }
            let started = (0..self.plan.folds_fitted)
                .any(|f| self.cp.completed(layer, family, 0, f).is_some() || self.cp.failed(layer, family, 0, f));
            if !started {
                let estimate = estimate_fit_seconds(family, train_rows, features.width(), &self.history)
                    * self.plan.folds_fitted as f64;
                let remaining = clock.remaining();
                let nothing_yet = first_layer && groups.iter().all(Option::is_none);
                if stopped || remaining <= 0.0 || (estimate > remaining && !nothing_yet) {
                    log::info!(
                        "layer {layer}: skipping {family} (estimated {estimate:.2}s, {:.2}s left)",
                        remaining.max(0.0)
                    );
                    self.append(Entry::FamilySkipped {
                        layer,
                        family,
                        estimate,
                        remaining: remaining.max(0.0),
                    })?;
                    continue;
                }
            }
            let mut group = BaggedModelGroup::new(family, layer, features.rows(), self.targets.output_dim());
            let folds = self.plan.folds_fitted;
            for fold in 0..folds {
                // each remaining fold gets an even share of the layer's time left
                let share = Deadline::after_seconds(clock.remaining() / (folds - fold) as f64);
                let fold_deadline = deadline.earliest(share);
                self.run_fold(layer, spec, features, &plan, 0, fold, &mut group, &fold_deadline, &clock)?;
                if deadline.expired() {
                    stopped = true;
                    break;
                }
            }
            groups[i] = self.check_group(layer, family, group, 0)?;
        }

        // adaptive extra repeats
        let repeats = match self.cp.planned_repeats(layer) {
            Some(n) => n,
            None => {
                let n = if stopped || self.plan.max_repeats == 1 {
                    1
                } else {
                    let cost = clock.elapsed().max(1e-9);
                    let extra = (clock.remaining().max(0.0) / cost).floor() as usize;
                    (1 + extra).min(self.plan.max_repeats)
                };
                self.append(Entry::LayerPlanned { layer, repeats: n })?;
                n
            }
        };
        if repeats > 1 {
            log::info!("layer {layer}: {repeats} bagging repeats");
            plan.extend_to(&self.targets, repeats);
        }
        'repeats: for repeat in 1..repeats {
            for (i, spec) in roster.iter().enumerate() {
                let Some(mut group) = groups[i].take() else { continue };
                for fold in 0..self.plan.folds_fitted {
                    if stopped || (deadline.expired() && self.cp.completed(layer, spec.family, repeat, fold).is_none()) {
                        groups[i] = Some(group);
                        break 'repeats;
                    }
                    self.run_fold(layer, spec, features, &plan, repeat, fold, &mut group, &deadline, &clock)?;
                }
                groups[i] = self.check_group(layer, spec.family, group, repeat)?;
            }
        }

        // a group cut short in its first repeat is kept only when nothing better exists
        let folds = self.plan.folds_fitted;
        let complete = |g: &BaggedModelGroup| g.models.iter().filter(|m| m.repeat == 0).count() + 1 >= folds;
        let any_complete = groups.iter().flatten().any(complete);
        let mut survivors = Vec::new();
        for g in groups.into_iter().flatten() {
            if any_complete && !complete(&g) {
                let family = g.family;
                self.discard(layer, family, "first repeat cut short by the time limit")?;
            } else {
                survivors.push(g);
            }
        }
        for g in &survivors {
            write_oof(&self.dir, g)?;
        }
        self.append(Entry::LayerClosed {
            layer,
            families: survivors.iter().map(|g| g.family).collect(),
        })?;
        log::info!(
            "layer {layer} closed after {:.1}s with {} groups",
            clock.elapsed(),
            survivors.len()
        );
        Ok(survivors)
    }

    /// Applies the fold-failure rule after a repeat of one group.
    fn check_group(
        &mut self,
        layer: usize,
        family: LearnerFamily,
        group: BaggedModelGroup,
        repeat: usize,
    ) -> Result<Option<BaggedModelGroup>> {
        let failures = (0..self.plan.folds_fitted)
            .filter(|&f| self.cp.failed(layer, family, repeat, f))
            .count();
        let allowed = if self.plan.folds_fitted > 1 { 1 } else { 0 };
        if failures > allowed || group.models.is_empty() {
            self.discard(layer, family, &format!("{failures} failed folds in repeat {repeat}"))?;
            return Ok(None);
        }
        Ok(Some(group))
    }

    fn discard(&mut self, layer: usize, family: LearnerFamily, reason: &str) -> Result<()> {
        log::warn!("layer {layer}: discarding {family}: {reason}");
        let dir = self.dir.join(format!("layer{layer}/{}", family.name()));
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        self.append(Entry::GroupDiscarded {
            layer,
            family,
            reason: reason.to_string(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn run_fold(
        &mut self,
        layer: usize,
        spec: &LearnerSpec,
        features: &FeatureMatrix,
        plan: &FoldPlan,
        repeat: usize,
        fold: usize,
        group: &mut BaggedModelGroup,
        deadline: &Deadline,
        clock: &LayerClock,
    ) -> Result<()> {
        let family = spec.family;
        let (train, test) = plan.split(repeat, fold);
        if let Some(Entry::FoldCompleted { path, seconds, .. }) = self.cp.completed(layer, family, repeat, fold) {
            let (path, seconds) = (path.clone(), *seconds);
            let model = TrainedModel::load(&self.dir.join(&path))?;
            let preds = model.predict(&features.select_rows(&test))?;
            self.history.push(FitRecord {
                family,
                rows: train.len(),
                cols: features.width(),
                seconds,
            });
            group.add_fold(repeat, fold, model, &test, &preds);
            return Ok(());
        }
        if self.cp.failed(layer, family, repeat, fold) {
            return Ok(());
        }
        if let Some(limit) = self.stop_after {
            if self.fits_this_session >= limit {
                return Err(Error::Interrupted(limit));
            }
        }
        let seed = derive_seed(self.root(), &[layer as u64, family as u64, repeat as u64, fold as u64]);
        let result = fit_fold(spec, features, &self.targets, plan, repeat, fold, deadline, seed);
        self.fits_this_session += 1;
        match result {
            Ok((model, test, preds)) => {
                let rel = model_rel_path(layer, family, repeat, fold);
                let path = self.dir.join(&rel);
                std::fs::create_dir_all(path.parent().unwrap())?;
                model.save(&path)?;
                let seconds = model.training_seconds;
                self.append(Entry::FoldCompleted {
                    layer,
                    family,
                    repeat,
                    fold,
                    seed,
                    seconds,
                    rows: train.len(),
                    cols: features.width(),
                    layer_elapsed: clock.elapsed(),
                    path: rel,
                    sha256: sha256_file(&path)?,
                })?;
                log::debug!("layer {layer} {family} r{repeat} f{fold}: {seconds:.2}s");
                if let Some(obs) = self.observer.as_deref_mut() {
                    obs.fold_fitted(layer, family, repeat, fold, &train, &test);
                }
                self.history.push(FitRecord {
                    family,
                    rows: train.len(),
                    cols: features.width(),
                    seconds,
                });
                group.add_fold(repeat, fold, model, &test, &preds);
            }
            Err(e) => {
                log::warn!("layer {layer} {family} r{repeat} f{fold} failed: {e}");
                self.append(Entry::FoldFailed {
                    layer,
                    family,
                    repeat,
                    fold,
                    seed,
                    error: e.to_string(),
                    layer_elapsed: clock.elapsed(),
                })?;
            }
        }
        Ok(())
    }
}
