//! CSV ingestion and column-kind / problem-type inference.
//!
//! Cells are kept as raw strings; missing cells are `None`. Every feature
//! column carries the [`ColumnKind`] inferred at load time.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokens treated as a missing cell (compared case-insensitively after trimming).
pub const MISSING_TOKENS: [&str; 5] = ["", "na", "n/a", "null", "nan"];

pub const TEXT_DISTINCT_RATIO: f64 = 0.90;
pub const TEXT_MIN_MEAN_GAPS: f64 = 3.0;
pub const PARSE_RATIO: f64 = 0.95;
pub const DISCARD_DISTINCT_RATIO: f64 = 0.99;
pub const REGRESSION_DISTINCT_RATIO: f64 = 0.05;
pub const REGRESSION_MIN_DISTINCT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Text,
    DateTime,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemType {
    Binary,
    Multiclass { num_classes: usize },
    Regression,
}

impl ProblemType {
    pub fn is_classification(&self) -> bool {
        !matches!(self, ProblemType::Regression)
    }

    /// Width of a prediction row: one probability per class, or a single value.
    pub fn output_dim(&self) -> usize {
        match self {
            ProblemType::Binary => 2,
            ProblemType::Multiclass { num_classes } => *num_classes,
            ProblemType::Regression => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<Option<String>>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<Option<String>>) -> Self {
        let kind = infer_column_kind(&values);
        Column {
            name: name.into(),
            kind,
            values,
        }
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn distinct_count(&self) -> usize {
        self.values
            .iter()
            .flatten()
            .collect::<HashSet<_>>()
            .len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub distinct_count: usize,
    pub missing_count: usize,
}

/// Per-column summary persisted as `schema.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSchema>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    columns: Vec<Column>,
    label: Option<Column>,
    row_count: usize,
}

pub fn is_missing_token(cell: &str) -> bool {
    let t = cell.trim();
    MISSING_TOKENS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

fn to_cell(raw: &str) -> Option<String> {
    if is_missing_token(raw) {
        None
    } else {
        Some(raw.to_string())
    }
}

impl TabularDataset {
    /// Builds a dataset from a header and string rows. Missing tokens become `None`.
    pub fn from_rows(
        headers: Vec<String>,
        rows: Vec<Vec<String>>,
        label: Option<&str>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(Error::DuplicateHeader(h.clone()));
            }
        }
        let label_idx = match label {
            Some(name) => Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::LabelNotFound(name.to_string()))?,
            ),
            None => None,
        };
        let mut cols: Vec<Vec<Option<String>>> = vec![Vec::with_capacity(rows.len()); headers.len()];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != headers.len() {
                return Err(Error::RaggedRow {
                    row: r + 1,
                    expected: headers.len(),
                    found: row.len(),
                });
            }
            for (c, cell) in row.iter().enumerate() {
                cols[c].push(to_cell(cell));
            }
        }
        Self::from_columns(headers, cols, label_idx)
    }

    fn from_columns(
        headers: Vec<String>,
        cols: Vec<Vec<Option<String>>>,
        label_idx: Option<usize>,
    ) -> Result<Self> {
        let row_count = cols.first().map_or(0, Vec::len);
        let mut columns = Vec::with_capacity(headers.len());
        let mut label = None;
        for (i, (name, values)) in headers.into_iter().zip(cols).enumerate() {
            let col = Column::new(name, values);
            if Some(i) == label_idx {
                label = Some(col);
            } else {
                columns.push(col);
            }
        }
        Ok(TabularDataset {
            columns,
            label,
            row_count,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, label: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(file);
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Self::from_rows(headers, rows, label)
    }

    /// Writes the dataset (label last) as CSV; missing cells become empty fields.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let all: Vec<&Column> = self.columns.iter().chain(self.label.iter()).collect();
        writer.write_record(all.iter().map(|c| c.name.as_str()))?;
        for r in 0..self.row_count {
            writer.write_record(all.iter().map(|c| c.values[r].as_deref().unwrap_or("")))?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    /// Feature columns (the label is never included).
    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn label(&self) -> Option<&Column> {
        self.label.as_ref()
    }

    pub fn label_name(&self) -> Option<&str> {
        self.label.as_ref().map(|c| c.name.as_str())
    }

    /// Returns the rows at `indices`, re-inferring nothing: kinds are carried over.
    pub fn select_rows(&self, indices: &[usize]) -> TabularDataset {
        let pick = |c: &Column| Column {
            name: c.name.clone(),
            kind: c.kind,
            values: indices.iter().map(|&i| c.values[i].clone()).collect(),
        };
        TabularDataset {
            columns: self.columns.iter().map(pick).collect(),
            label: self.label.as_ref().map(pick),
            row_count: indices.len(),
        }
    }

    pub fn without_label(&self) -> TabularDataset {
        TabularDataset {
            columns: self.columns.clone(),
            label: None,
            row_count: self.row_count,
        }
    }

    pub fn schema(&self) -> Schema {
        Schema {
            columns: self
                .columns
                .iter()
                .map(|c| ColumnSchema {
                    name: c.name.clone(),
                    kind: c.kind,
                    distinct_count: c.distinct_count(),
                    missing_count: c.missing_count(),
                })
                .collect(),
            label: self.label_name().map(str::to_string),
        }
    }
}

pub fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses ISO-8601 dates and datetimes, plus `YYYY/MM/DD`.
pub fn parse_datetime(cell: &str) -> Option<NaiveDateTime> {
    let s = cell.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y/%m/%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|dt| dt.naive_utc())
}

/// Number of maximal whitespace runs lying between two non-whitespace tokens.
pub fn whitespace_gaps(cell: &str) -> usize {
    cell.split_whitespace().count().saturating_sub(1)
}

pub fn infer_column_kind(values: &[Option<String>]) -> ColumnKind {
    let present: Vec<&str> = values.iter().flatten().map(String::as_str).collect();
    if present.is_empty() {
        log::warn!("all-missing column discarded");
        return ColumnKind::Discarded;
    }
    let n = present.len() as f64;
    let distinct = present.iter().collect::<HashSet<_>>().len() as f64;
    let distinct_ratio = distinct / n;

    let mean_gaps = present.iter().map(|s| whitespace_gaps(s)).sum::<usize>() as f64 / n;
    if distinct_ratio >= TEXT_DISTINCT_RATIO && mean_gaps > TEXT_MIN_MEAN_GAPS {
        return ColumnKind::Text;
    }
    let numeric = present.iter().filter(|s| parse_number(s).is_some()).count() as f64;
    if numeric / n >= PARSE_RATIO {
        return ColumnKind::Numeric;
    }
    let dates = present.iter().filter(|s| parse_datetime(s).is_some()).count() as f64;
    if dates / n >= PARSE_RATIO {
        return ColumnKind::DateTime;
    }
    if distinct_ratio >= DISCARD_DISTINCT_RATIO {
        return ColumnKind::Discarded;
    }
    ColumnKind::Categorical
}

pub fn infer_problem_type(labels: &[Option<String>]) -> Result<ProblemType> {
    let missing = labels.iter().filter(|v| v.is_none()).count();
    if missing > 0 {
        return Err(Error::MissingLabels { count: missing });
    }
    let present: Vec<&str> = labels.iter().flatten().map(String::as_str).collect();
    let numeric: Option<Vec<f64>> = present.iter().map(|s| parse_number(s)).collect();
    let distinct = match &numeric {
        Some(vals) => vals
            .iter()
            .map(|v| if *v == 0.0 { 0u64 } else { v.to_bits() })
            .collect::<HashSet<_>>()
            .len(),
        None => present.iter().collect::<HashSet<_>>().len(),
    };
    if distinct <= 1 {
        return Err(Error::DegenerateProblem(
            present.first().map(|s| s.to_string()).unwrap_or_default(),
        ));
    }
    if numeric.is_some() {
        let ratio = distinct as f64 / present.len() as f64;
        if ratio >= REGRESSION_DISTINCT_RATIO && distinct > REGRESSION_MIN_DISTINCT {
            return Ok(ProblemType::Regression);
        }
    }
    Ok(match distinct {
        2 => ProblemType::Binary,
        c => ProblemType::Multiclass { num_classes: c },
    })
}

/// Ordered class vocabulary: numeric labels sort numerically, others lexicographically.
pub fn class_vocabulary(labels: &[Option<String>]) -> Vec<String> {
    let mut counts: HashMap<&str, ()> = HashMap::new();
    for l in labels.iter().flatten() {
        counts.insert(l.as_str(), ());
    }
    let mut classes: Vec<String> = counts.into_keys().map(str::to_string).collect();
    let all_numeric = classes.iter().all(|c| parse_number(c).is_some());
    if all_numeric {
        classes.sort_by(|a, b| {
            parse_number(a)
                .unwrap()
                .total_cmp(&parse_number(b).unwrap())
                .then_with(|| a.cmp(b))
        });
    } else {
        classes.sort();
    }
    classes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(v: &[&str]) -> Vec<Option<String>> {
        v.iter().map(|s| to_cell(s)).collect()
    }

    #[test]
    fn three_row_csv_with_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,b,class\n1,x,yes\n2,y,no\n3,x,yes\n").unwrap();
        let ds = TabularDataset::load_csv(&path, Some("class")).unwrap();
        assert_eq!(ds.columns().len(), 2);
        assert_eq!(ds.row_count(), 3);
        assert_eq!(ds.label_name(), Some("class"));
    }

    #[test]
    fn ragged_row_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n4,5\n").unwrap();
        let err = TabularDataset::load_csv(&path, None).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { row: 2, expected: 3, found: 2 }));
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.csv");
        assert!(matches!(
            TabularDataset::load_csv(&missing, None),
            Err(Error::FileNotFound(_))
        ));
        let dup = dir.path().join("dup.csv");
        std::fs::write(&dup, "a,a\n1,2\n").unwrap();
        assert!(matches!(
            TabularDataset::load_csv(&dup, None),
            Err(Error::DuplicateHeader(_))
        ));
        let ok = dir.path().join("ok.csv");
        std::fs::write(&ok, "a,b\n1,2\n").unwrap();
        assert!(matches!(
            TabularDataset::load_csv(&ok, Some("z")),
            Err(Error::LabelNotFound(_))
        ));
    }

    #[test]
    fn missing_tokens_and_quoting() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,b\n,NA\nn/a,\"x, y\"\nNULL,nan\n").unwrap();
        let ds = TabularDataset::load_csv(&path, None).unwrap();
        let a = &ds.column("a").unwrap().values;
        let b = &ds.column("b").unwrap().values;
        assert_eq!(a, &vec![None, None, None]);
        assert_eq!(b, &vec![None, Some("x, y".to_string()), None]);
    }

    #[test]
    fn text_column_detected() {
        let values: Vec<Option<String>> = (0..1000)
            .map(|i| Some(format!("row {i} says the quick brown fox jumps over {}", i * 7)))
            .collect();
        assert!(values.iter().flatten().all(|s| whitespace_gaps(s) == 9));
        assert_eq!(infer_column_kind(&values), ColumnKind::Text);
    }

    #[test]
    fn constant_column_is_categorical() {
        let values = cells(&["x"; 50]);
        assert_eq!(infer_column_kind(&values), ColumnKind::Categorical);
    }

    #[test]
    fn opaque_ids_are_discarded() {
        let values: Vec<Option<String>> =
            (0..1000).map(|i| Some(format!("id{i:06x}q"))).collect();
        assert_eq!(infer_column_kind(&values), ColumnKind::Discarded);
    }

    #[test]
    fn numeric_and_datetime_columns() {
        let mut nums: Vec<Option<String>> = (0..100).map(|i| Some(format!("{}", i as f64 * 0.5))).collect();
        nums[3] = Some("oops".into());
        assert_eq!(infer_column_kind(&nums), ColumnKind::Numeric);
        let dates: Vec<Option<String>> = (1..=28)
            .flat_map(|d| {
                [
                    Some(format!("2020-02-{d:02}")),
                    Some(format!("2021/03/{d:02}")),
                    Some(format!("2019-01-{d:02}T10:11:12")),
                ]
            })
            .collect();
        assert_eq!(infer_column_kind(&dates), ColumnKind::DateTime);
        assert_eq!(infer_column_kind(&cells(&["", "NA"])), ColumnKind::Discarded);
    }

    #[test]
    fn problem_types() {
        assert_eq!(
            infer_problem_type(&cells(&["yes", "no", "yes"])).unwrap(),
            ProblemType::Binary
        );
        let floats: Vec<Option<String>> =
            (0..10000).map(|i| Some(format!("{}", i as f64 * 0.37 + 0.01))).collect();
        assert_eq!(infer_problem_type(&floats).unwrap(), ProblemType::Regression);
        // 3 distinct over 6000 rows: ratio 0.0005 < 0.05 and 3 <= 20.
        let ints: Vec<Option<String>> = (0..6000).map(|i| Some(format!("{}", i % 3))).collect();
        assert_eq!(
            infer_problem_type(&ints).unwrap(),
            ProblemType::Multiclass { num_classes: 3 }
        );
        assert!(matches!(
            infer_problem_type(&cells(&["a", "a"])),
            Err(Error::DegenerateProblem(_))
        ));
        assert!(matches!(
            infer_problem_type(&cells(&["a", ""])),
            Err(Error::MissingLabels { count: 1 })
        ));
    }

    #[test]
    fn class_vocabulary_sorts_numerically() {
        let v = class_vocabulary(&cells(&["10", "2", "1", "2"]));
        assert_eq!(v, vec!["1", "2", "10"]);
        let v = class_vocabulary(&cells(&["b", "a"]));
        assert_eq!(v, vec!["a", "b"]);
    }

    #[test]
    fn schema_summary() {
        let ds = TabularDataset::from_rows(
            vec!["a".into(), "y".into()],
            vec![
                vec!["1".into(), "p".into()],
                vec!["".into(), "q".into()],
                vec!["1".into(), "p".into()],
            ],
            Some("y"),
        )
        .unwrap();
        let s = ds.schema();
        assert_eq!(s.columns.len(), 1);
        assert_eq!(s.columns[0].distinct_count, 1);
        assert_eq!(s.columns[0].missing_count, 1);
        assert_eq!(s.label.as_deref(), Some("y"));
    }
}
