//! Two-stage feature preprocessing.
//!
//! [`AgnosticTransform`] turns a [`TabularDataset`] into a [`FeatureMatrix`]
//! of numeric and categorical features shared by every learner.
//! [`SpecificTransform`] is then fitted per learner family on a copy of that
//! matrix and produces the dense [`ModelInput`] the learner consumes.

use std::collections::HashMap;

use chrono::{Datelike, Timelike};
use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{parse_datetime, parse_number, ColumnKind, TabularDataset};

/// Code reserved for missing and never-seen categories.
pub const UNKNOWN_CODE: u32 = 0;
pub const MAX_CATEGORY_LEVELS: usize = 100;
pub const NGRAM_MIN_COUNT: usize = 3;
pub const NGRAM_MAX_VOCAB: usize = 512;
pub const SKEW_THRESHOLD: f64 = 1.0;
/// Below this many levels the neural family one-hot encodes instead of embedding.
pub const MIN_EMBED_LEVELS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatePart {
    Year,
    Month,
    Day,
    Weekday,
    Hour,
    EpochSeconds,
}

const DATE_PARTS: [DatePart; 6] = [
    DatePart::Year,
    DatePart::Month,
    DatePart::Day,
    DatePart::Weekday,
    DatePart::Hour,
    DatePart::EpochSeconds,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureTransform {
    Raw,
    DatePart(DatePart),
    Ngram(String),
    Category,
    StackPrediction {
        layer: usize,
        family: String,
        output: usize,
    },
    MedianImputed,
    Standardized,
    Quantile,
    /// Zero-variance column replaced by a constant 0.
    ConstantZero,
    OneHot { code: u32 },
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub transform: FeatureTransform,
}

impl Provenance {
    pub fn new(source: &str, transform: FeatureTransform) -> Self {
        Provenance {
            source: source.to_string(),
            transform,
        }
    }
}

/// Numeric block (NaN marks a missing entry) plus categorical codes.
///
/// Categorical column `c` holds codes in `0..=cardinalities[c]`, where 0 is
/// Unknown and the last code is Other when the column had more than
/// [`MAX_CATEGORY_LEVELS`] levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub numeric: Array2<f64>,
    pub categorical: Array2<u32>,
    pub cardinalities: Vec<u32>,
    /// One entry per numeric column, then one per categorical column.
    pub provenance: Vec<Provenance>,
}

impl FeatureMatrix {
    pub fn numeric_only(numeric: Array2<f64>) -> Self {
        let provenance = (0..numeric.ncols())
            .map(|i| Provenance::new(&format!("x{i}"), FeatureTransform::Raw))
            .collect();
        let rows = numeric.nrows();
        FeatureMatrix {
            numeric,
            categorical: Array2::zeros((rows, 0)),
            cardinalities: Vec::new(),
            provenance,
        }
    }

    pub fn rows(&self) -> usize {
        self.numeric.nrows()
    }

    pub fn numeric_width(&self) -> usize {
        self.numeric.ncols()
    }

    pub fn categorical_width(&self) -> usize {
        self.categorical.ncols()
    }

    pub fn width(&self) -> usize {
        self.numeric_width() + self.categorical_width()
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            numeric: self.numeric.select(Axis(0), idx),
            categorical: self.categorical.select(Axis(0), idx),
            cardinalities: self.cardinalities.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Appends numeric columns after the existing numeric block.
    pub fn with_numeric_columns(&self, extra: &Array2<f64>, provenance: Vec<Provenance>) -> Result<Self> {
        if extra.nrows() != self.rows() {
            return Err(Error::SchemaMismatch(format!(
                "row misalignment: {} vs {}",
                extra.nrows(),
                self.rows()
            )));
        }
        let numeric = ndarray::concatenate(Axis(1), &[self.numeric.view(), extra.view()])
            .expect("row counts checked");
        let d = self.numeric_width();
        let mut prov = self.provenance[..d].to_vec();
        prov.extend(provenance);
        prov.extend_from_slice(&self.provenance[d..]);
        Ok(FeatureMatrix {
            numeric,
            categorical: self.categorical.clone(),
            cardinalities: self.cardinalities.clone(),
            provenance: prov,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AgnosticColumn {
    Numeric {
        name: String,
    },
    DateTime {
        name: String,
    },
    Categorical {
        name: String,
        /// Retained levels; level `i` gets code `i + 1`.
        levels: Vec<String>,
        /// Training levels beyond the retained set; they share the Other code.
        other_levels: Vec<String>,
    },
    Text {
        name: String,
        vocabulary: Vec<String>,
    },
}

impl AgnosticColumn {
    pub fn name(&self) -> &str {
        match self {
            AgnosticColumn::Numeric { name }
            | AgnosticColumn::DateTime { name }
            | AgnosticColumn::Categorical { name, .. }
            | AgnosticColumn::Text { name, .. } => name,
        }
    }
}

/// Model-agnostic stage, fitted once on the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgnosticTransform {
    pub columns: Vec<AgnosticColumn>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Word unigrams and bigrams of one cell.
pub fn ngrams(text: &str) -> Vec<String> {
    let tokens = tokenize(text);
    let mut out = tokens.clone();
    out.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

/// Retained n-gram vocabulary: corpus count >= `min_count`, top `max_vocab`
/// by count with ties broken lexicographically.
pub fn ngram_vocabulary<'a>(
    cells: impl Iterator<Item = &'a str>,
    min_count: usize,
    max_vocab: usize,
) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for cell in cells {
        for g in ngrams(cell) {
            *counts.entry(g).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    kept.truncate(max_vocab);
    kept.into_iter().map(|(g, _)| g).collect()
}

/// Retained category levels by descending frequency, ties lexicographic,
/// plus the sorted remainder that collapses to Other.
fn category_levels(values: &[Option<String>]) -> (Vec<String>, Vec<String>) {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for v in values.iter().flatten() {
        *counts.entry(v.as_str()).or_default() += 1;
    }
    let mut levels: Vec<(&str, usize)> = counts.into_iter().collect();
    levels.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let rest = levels.split_off(levels.len().min(MAX_CATEGORY_LEVELS));
    let mut other: Vec<String> = rest.into_iter().map(|(l, _)| l.to_string()).collect();
    other.sort();
    (levels.into_iter().map(|(l, _)| l.to_string()).collect(), other)
}

pub fn date_parts(cell: &str) -> Option<[f64; 6]> {
    let dt = parse_datetime(cell)?;
    Some([
        dt.year() as f64,
        dt.month() as f64,
        dt.day() as f64,
        dt.weekday().num_days_from_monday() as f64,
        dt.hour() as f64,
        dt.and_utc().timestamp() as f64,
    ])
}

impl AgnosticTransform {
    pub fn fit(data: &TabularDataset) -> Self {
        let columns = data
            .columns()
            .iter()
            .filter_map(|col| {
                let name = col.name.clone();
                match col.kind {
                    ColumnKind::Numeric => Some(AgnosticColumn::Numeric { name }),
                    ColumnKind::DateTime => Some(AgnosticColumn::DateTime { name }),
                    ColumnKind::Categorical => {
                        let (levels, other_levels) = category_levels(&col.values);
                        Some(AgnosticColumn::Categorical {
                            name,
                            levels,
                            other_levels,
                        })
                    }
                    ColumnKind::Text => {
                        let vocabulary = ngram_vocabulary(
                            col.values.iter().flatten().map(String::as_str),
                            NGRAM_MIN_COUNT,
                            NGRAM_MAX_VOCAB,
                        );
                        Some(AgnosticColumn::Text { name, vocabulary })
                    }
                    ColumnKind::Discarded => None,
                }
            })
            .collect();
        AgnosticTransform { columns }
    }

    pub fn apply(&self, data: &TabularDataset) -> Result<FeatureMatrix> {
        let rows = data.row_count();
        let mut numeric_cols: Vec<Vec<f64>> = Vec::new();
        let mut numeric_prov = Vec::new();
        let mut cat_cols: Vec<Vec<u32>> = Vec::new();
        let mut cat_prov = Vec::new();
        let mut cardinalities = Vec::new();

        for spec in &self.columns {
            let name = spec.name();
            let col = data
                .column(name)
                .ok_or_else(|| Error::SchemaMismatch(format!("missing column `{name}`")))?;
            match spec {
                AgnosticColumn::Numeric { .. } => {
                    numeric_cols.push(
                        col.values
                            .iter()
                            .map(|v| v.as_deref().and_then(parse_number).unwrap_or(f64::NAN))
                            .collect(),
                    );
                    numeric_prov.push(Provenance::new(name, FeatureTransform::Raw));
                }
                AgnosticColumn::DateTime { .. } => {
                    let parsed: Vec<Option<[f64; 6]>> = col
                        .values
                        .iter()
                        .map(|v| v.as_deref().and_then(date_parts))
                        .collect();
                    for (p, part) in DATE_PARTS.iter().enumerate() {
                        numeric_cols.push(parsed.iter().map(|v| v.map_or(f64::NAN, |a| a[p])).collect());
                        numeric_prov.push(Provenance::new(name, FeatureTransform::DatePart(*part)));
                    }
                }
                AgnosticColumn::Categorical {
                    levels,
                    other_levels,
                    ..
                } => {
                    let other = levels.len() as u32 + 1;
                    let mut index: HashMap<&str, u32> = levels
                        .iter()
                        .enumerate()
                        .map(|(i, l)| (l.as_str(), i as u32 + 1))
                        .collect();
                    index.extend(other_levels.iter().map(|l| (l.as_str(), other)));
                    // missing or never seen: Unknown
                    let codes = col
                        .values
                        .iter()
                        .map(|v| {
                            v.as_deref()
                                .and_then(|s| index.get(s).copied())
                                .unwrap_or(UNKNOWN_CODE)
                        })
                        .collect();
                    cat_cols.push(codes);
                    cat_prov.push(Provenance::new(name, FeatureTransform::Category));
                    cardinalities.push(levels.len() as u32 + u32::from(!other_levels.is_empty()));
                }
                AgnosticColumn::Text { vocabulary, .. } => {
                    let index: HashMap<&str, usize> =
                        vocabulary.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
                    let mut block = vec![vec![0.0; rows]; vocabulary.len()];
                    for (r, v) in col.values.iter().enumerate() {
                        if let Some(text) = v {
                            for g in ngrams(text) {
                                if let Some(&j) = index.get(g.as_str()) {
                                    block[j][r] += 1.0;
                                }
                            }
                        }
                    }
                    numeric_cols.extend(block);
                    numeric_prov.extend(
                        vocabulary
                            .iter()
                            .map(|g| Provenance::new(name, FeatureTransform::Ngram(g.clone()))),
                    );
                }
            }
        }

        let numeric = columns_to_matrix(rows, &numeric_cols, 0.0);
        let categorical = columns_to_matrix(rows, &cat_cols, 0u32);
        numeric_prov.extend(cat_prov);
        Ok(FeatureMatrix {
            numeric,
            categorical,
            cardinalities,
            provenance: numeric_prov,
        })
    }
}

fn columns_to_matrix<T: Copy>(rows: usize, cols: &[Vec<T>], fill: T) -> Array2<T> {
    let mut m = Array2::from_elem((rows, cols.len()), fill);
    for (j, col) in cols.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            m[[r, j]] = v;
        }
    }
    m
}

/// Learner-family groups that share a model-specific preprocessing recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformFamily {
    /// Median imputation; categorical codes passed through.
    Tree,
    /// Median imputation, quantile or standard scaling, embeddings or one-hot.
    Neural,
    /// Median imputation, standard scaling, one-hot for every categorical.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NumericStep {
    Impute { median: f64 },
    Standardize { median: f64, mean: f64, std: f64 },
    Quantile { median: f64, knots: Vec<(f64, f64)> },
    Constant { median: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CategoricalStep {
    /// Codes kept as-is, for learners that consume them natively.
    Codes { cardinality: u32 },
    /// Indicator per code in `0..=cardinality` (Unknown included).
    OneHot { cardinality: u32 },
    Embed { cardinality: u32 },
}

/// Learner-ready matrix: dense reals plus codes for categorical inputs that
/// the learner handles itself (embeddings or tree one-hot expansion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInput {
    pub dense: Array2<f64>,
    pub codes: Array2<u32>,
    pub code_cardinalities: Vec<u32>,
    pub provenance: Vec<Provenance>,
}

impl ModelInput {
    pub fn rows(&self) -> usize {
        self.dense.nrows()
    }

    /// Dense block with each code column expanded into `cardinality + 1` indicators.
    pub fn one_hot_expanded(&self) -> Array2<f64> {
        let extra: usize = self.code_cardinalities.iter().map(|&c| c as usize + 1).sum();
        let d = self.dense.ncols();
        let mut out = Array2::zeros((self.rows(), d + extra));
        out.slice_mut(s![.., ..d]).assign(&self.dense);
        let mut offset = d;
        for (j, &card) in self.code_cardinalities.iter().enumerate() {
            for r in 0..self.rows() {
                let code = self.codes[[r, j]].min(card) as usize;
                out[[r, offset + code]] = 1.0;
            }
            offset += card as usize + 1;
        }
        out
    }
}

/// Model-specific stage, fitted on the training rows a learner sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificTransform {
    pub family: TransformFamily,
    pub numeric: Vec<NumericStep>,
    pub categorical: Vec<CategoricalStep>,
    pub source_provenance: Vec<Provenance>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Population sample skewness `m3 / m2^1.5`; zero for constant data.
pub fn skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 <= 1e-24 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Empirical-CDF knots `(value, u)` with midpoint ranks, scaled so the
/// smallest value maps to 0 and the largest to 1.
pub fn quantile_knots(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let mut knots = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        // zero-based midrank of the tie block [i, j]
        let midrank = 0.5 * (i + j) as f64;
        let u = if n == 1 { 0.5 } else { midrank / (n - 1) as f64 };
        knots.push((sorted[i], u));
        i = j + 1;
    }
    knots
}

pub fn quantile_map(knots: &[(f64, f64)], x: f64) -> f64 {
    match knots.len() {
        0 => 0.0,
        1 => knots[0].1,
        _ => {
            if x <= knots[0].0 {
                return knots[0].1;
            }
            let last = knots[knots.len() - 1];
            if x >= last.0 {
                return last.1;
            }
            let hi = knots.partition_point(|k| k.0 < x);
            let (x1, u1) = knots[hi];
            if x1 == x {
                return u1;
            }
            let (x0, u0) = knots[hi - 1];
            u0 + (u1 - u0) * (x - x0) / (x1 - x0)
        }
    }
}

impl NumericStep {
    fn fit(column: &[f64], family: TransformFamily) -> Self {
        let mut present: Vec<f64> = column.iter().copied().filter(|v| !v.is_nan()).collect();
        let median = median(&mut present).unwrap_or(0.0);
        if family == TransformFamily::Tree {
            return NumericStep::Impute { median };
        }
        let imputed: Vec<f64> = column.iter().map(|&v| if v.is_nan() { median } else { v }).collect();
        let n = imputed.len().max(1) as f64;
        let mean = imputed.iter().sum::<f64>() / n;
        let var = imputed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 1e-12 * mean.abs().max(1.0)) {
            return NumericStep::Constant { median };
        }
        if family == TransformFamily::Neural && skewness(&present).abs() > SKEW_THRESHOLD {
            return NumericStep::Quantile {
                median,
                knots: quantile_knots(&present),
            };
        }
        NumericStep::Standardize { median, mean, std }
    }

    fn apply(&self, x: f64) -> f64 {
        match self {
            NumericStep::Impute { median } => {
                if x.is_nan() {
                    *median
                } else {
                    x
                }
            }
            NumericStep::Standardize { median, mean, std } => {
                let x = if x.is_nan() { *median } else { x };
                (x - mean) / std
            }
            NumericStep::Quantile { median, knots } => {
                quantile_map(knots, if x.is_nan() { *median } else { x })
            }
            NumericStep::Constant { .. } => 0.0,
        }
    }

    fn transform_tag(&self) -> FeatureTransform {
        match self {
            NumericStep::Impute { .. } => FeatureTransform::MedianImputed,
            NumericStep::Standardize { .. } => FeatureTransform::Standardized,
            NumericStep::Quantile { .. } => FeatureTransform::Quantile,
            NumericStep::Constant { .. } => FeatureTransform::ConstantZero,
        }
    }
}

impl SpecificTransform {
    pub fn fit(fm: &FeatureMatrix, family: TransformFamily) -> Self {
        let numeric = fm
            .numeric
            .columns()
            .into_iter()
            .map(|col| NumericStep::fit(&col.to_vec(), family))
            .collect();
        let categorical = fm
            .cardinalities
            .iter()
            .map(|&cardinality| match family {
                TransformFamily::Tree => CategoricalStep::Codes { cardinality },
                TransformFamily::Dense => CategoricalStep::OneHot { cardinality },
                TransformFamily::Neural if cardinality < MIN_EMBED_LEVELS => {
                    CategoricalStep::OneHot { cardinality }
                }
                TransformFamily::Neural => CategoricalStep::Embed { cardinality },
            })
            .collect();
        SpecificTransform {
            family,
            numeric,
            categorical,
            source_provenance: fm.provenance.clone(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.numeric.len() + self.categorical.len()
    }

    pub fn apply(&self, fm: &FeatureMatrix) -> Result<ModelInput> {
        if fm.numeric_width() != self.numeric.len() || fm.categorical_width() != self.categorical.len() {
            return Err(Error::SchemaMismatch(format!(
                "feature width {}+{} does not match fitted width {}+{}",
                fm.numeric_width(),
                fm.categorical_width(),
                self.numeric.len(),
                self.categorical.len()
            )));
        }
        let rows = fm.rows();
        let one_hot_width: usize = self
            .categorical
            .iter()
            .map(|c| match c {
                CategoricalStep::OneHot { cardinality } => *cardinality as usize + 1,
                _ => 0,
            })
            .sum();
        let d = self.numeric.len();
        let mut dense = Array2::zeros((rows, d + one_hot_width));
        let mut provenance = Vec::with_capacity(d + one_hot_width);
        for (j, step) in self.numeric.iter().enumerate() {
            let src = fm.numeric.column(j);
            let mut dst = dense.column_mut(j);
            for (o, &x) in dst.iter_mut().zip(src.iter()) {
                *o = step.apply(x);
            }
            provenance.push(Provenance::new(&self.source_provenance[j].source, step.transform_tag()));
        }
        let mut offset = d;
        let mut code_cols = Vec::new();
        let mut code_cards = Vec::new();
        let mut code_prov = Vec::new();
        for (j, step) in self.categorical.iter().enumerate() {
            let src = fm.categorical.column(j);
            let source = &self.source_provenance[d + j].source;
            match step {
                CategoricalStep::OneHot { cardinality } => {
                    for (r, &code) in src.iter().enumerate() {
                        let code = if code > *cardinality { UNKNOWN_CODE } else { code };
                        dense[[r, offset + code as usize]] = 1.0;
                    }
                    for code in 0..=*cardinality {
                        provenance.push(Provenance::new(source, FeatureTransform::OneHot { code }));
                    }
                    offset += *cardinality as usize + 1;
                }
                CategoricalStep::Codes { cardinality } | CategoricalStep::Embed { cardinality } => {
                    code_cols.push(
                        src.iter()
                            .map(|&c| if c > *cardinality { UNKNOWN_CODE } else { c })
                            .collect::<Vec<_>>(),
                    );
                    code_cards.push(*cardinality);
                    let tag = if matches!(step, CategoricalStep::Embed { .. }) {
                        FeatureTransform::Embedding
                    } else {
                        FeatureTransform::Category
                    };
                    code_prov.push(Provenance::new(source, tag));
                }
            }
        }
        provenance.extend(code_prov);
        Ok(ModelInput {
            dense,
            codes: columns_to_matrix(rows, &code_cols, 0u32),
            code_cardinalities: code_cards,
            provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(headers: &[&str], rows: &[Vec<&str>]) -> TabularDataset {
        TabularDataset::from_rows(
            headers.iter().map(|s| s.to_string()).collect(),
            rows.iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn ngram_vocabulary_respects_min_count() {
        // brute-force corpus: "foo" 500 times, "qux" once, "bar" twice
        let mut corpus: Vec<String> = (0..500).map(|_| "foo".to_string()).collect();
        corpus.push("qux".into());
        corpus.push("bar".into());
        corpus.push("bar".into());
        let vocab = ngram_vocabulary(corpus.iter().map(String::as_str), 3, 512);
        assert_eq!(vocab, vec!["foo".to_string()]);
    }

    #[test]
    fn ngrams_include_bigrams() {
        assert_eq!(ngrams("The cat, sat"), vec!["the", "cat", "sat", "the cat", "cat sat"]);
    }

    #[test]
    fn date_parts_match_calendar() {
        let p = date_parts("2016-01-02").unwrap();
        // 2016-01-02 was a Saturday; 16802 days after the epoch.
        assert_eq!(p, [2016.0, 1.0, 2.0, 5.0, 0.0, 16802.0 * 86400.0]);
        let p = date_parts("2016-01-02T13:00:00").unwrap();
        assert_eq!(p[4], 13.0);
    }

    #[test]
    fn high_cardinality_keeps_top_100() {
        // level i appears 200 - i times, so the top 100 are l0..l99
        let mut rows = Vec::new();
        for i in 0..150usize {
            for _ in 0..(200 - i) {
                rows.push(vec![format!("l{i}")]);
            }
        }
        let rows_ref: Vec<Vec<&str>> = rows.iter().map(|r| vec![r[0].as_str()]).collect();
        let ds = dataset(&["c"], &rows_ref);
        let t = AgnosticTransform::fit(&ds);
        match &t.columns[0] {
            AgnosticColumn::Categorical { levels, other_levels, .. } => {
                assert_eq!(levels.len(), 100);
                assert_eq!(other_levels.len(), 50);
                assert_eq!(levels[0], "l0");
                assert_eq!(levels[99], "l99");
            }
            other => panic!("unexpected {other:?}"),
        }
        let fm = t.apply(&ds).unwrap();
        assert_eq!(fm.cardinalities, vec![101]);
        assert!(fm.categorical.iter().all(|&c| (1..=101).contains(&c)));
        let last = rows.len() - 1; // a row of l149
        assert_eq!(fm.categorical[[last, 0]], 101);
    }

    #[test]
    fn unseen_category_maps_to_unknown() {
        let train = dataset(&["c"], &[vec!["a"], vec!["b"], vec!["a"]]);
        let t = AgnosticTransform::fit(&train);
        let test = dataset(&["c"], &[vec!["zzz"], vec!["b"], vec![""]]);
        let fm = t.apply(&test).unwrap();
        assert_eq!(fm.categorical.column(0).to_vec(), vec![0, 2, 0]);
    }

    #[test]
    fn apply_is_name_keyed() {
        let train = dataset(&["x", "c"], &[vec!["1", "a"], vec!["2", "b"], vec!["3", "a"]]);
        let swapped = dataset(&["c", "x"], &[vec!["a", "1"], vec!["b", "2"], vec!["a", "3"]]);
        let t = AgnosticTransform::fit(&train);
        assert_eq!(t.apply(&train).unwrap(), t.apply(&swapped).unwrap());
        let missing = dataset(&["x"], &[vec!["1"]]);
        assert!(matches!(t.apply(&missing), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn tree_family_imputes_median() {
        let fm = FeatureMatrix::numeric_only(
            Array2::from_shape_vec((4, 1), vec![1.0, 2.0, f64::NAN, 4.0]).unwrap(),
        );
        let t = SpecificTransform::fit(&fm, TransformFamily::Tree);
        let out = t.apply(&fm).unwrap();
        assert_eq!(out.dense.column(0).to_vec(), vec![1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn constant_column_becomes_zero() {
        let fm = FeatureMatrix::numeric_only(Array2::from_elem((5, 1), 3.5));
        let t = SpecificTransform::fit(&fm, TransformFamily::Neural);
        let out = t.apply(&fm).unwrap();
        assert!(out.dense.iter().all(|&v| v == 0.0));
        assert_eq!(out.provenance[0].transform, FeatureTransform::ConstantZero);
    }

    #[test]
    fn neural_one_hot_small_cardinality() {
        let fm = FeatureMatrix {
            numeric: Array2::zeros((4, 0)),
            categorical: Array2::from_shape_vec((4, 1), vec![1, 2, 3, 0]).unwrap(),
            cardinalities: vec![3],
            provenance: vec![Provenance::new("c", FeatureTransform::Category)],
        };
        let t = SpecificTransform::fit(&fm, TransformFamily::Neural);
        let out = t.apply(&fm).unwrap();
        assert_eq!(out.dense.ncols(), 4);
        assert_eq!(out.codes.ncols(), 0);
        for row in out.dense.rows() {
            assert_eq!(row.sum(), 1.0);
        }
        assert_eq!(out.dense[[3, 0]], 1.0);
    }

    #[test]
    fn neural_embeds_large_cardinality() {
        let fm = FeatureMatrix {
            numeric: Array2::zeros((2, 0)),
            categorical: Array2::from_shape_vec((2, 1), vec![4, 9]).unwrap(),
            cardinalities: vec![5],
            provenance: vec![Provenance::new("c", FeatureTransform::Category)],
        };
        let t = SpecificTransform::fit(&fm, TransformFamily::Neural);
        let out = t.apply(&fm).unwrap();
        assert_eq!(out.dense.ncols(), 0);
        assert_eq!(out.code_cardinalities, vec![5]);
        // out-of-range code is treated as Unknown
        assert_eq!(out.codes.column(0).to_vec(), vec![4, 0]);
    }

    #[test]
    fn skewed_column_is_quantile_normalized() {
        let vals: Vec<f64> = (0..200).map(|i| (i as f64 / 20.0).exp()).collect();
        assert!(skewness(&vals) > 1.0);
        let fm = FeatureMatrix::numeric_only(Array2::from_shape_vec((200, 1), vals).unwrap());
        let t = SpecificTransform::fit(&fm, TransformFamily::Neural);
        assert!(matches!(t.numeric[0], NumericStep::Quantile { .. }));
        let out = t.apply(&fm).unwrap();
        let col = out.dense.column(0);
        assert_eq!(col[0], 0.0);
        assert_eq!(col[199], 1.0);
        // kNN/linear family standardizes instead
        let t = SpecificTransform::fit(&fm, TransformFamily::Dense);
        assert!(matches!(t.numeric[0], NumericStep::Standardize { .. }));
    }

    #[test]
    fn quantile_map_interpolates_and_clamps() {
        let knots = quantile_knots(&[0.0, 1.0, 1.0, 3.0]);
        assert_eq!(knots, vec![(0.0, 0.0), (1.0, 0.5), (3.0, 1.0)]);
        assert_eq!(quantile_map(&knots, -5.0), 0.0);
        assert_eq!(quantile_map(&knots, 2.0), 0.75);
        assert_eq!(quantile_map(&knots, 9.0), 1.0);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let fm = FeatureMatrix::numeric_only(Array2::zeros((3, 2)));
        let t = SpecificTransform::fit(&fm, TransformFamily::Dense);
        let other = FeatureMatrix::numeric_only(Array2::zeros((3, 3)));
        assert!(matches!(t.apply(&other), Err(Error::SchemaMismatch(_))));
    }
}
