//! Benchmark report over several systems and datasets: per-dataset rescaled
//! losses, ranks, and win/loss/failure/champion tallies.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::mean_ranks;

/// Decimal places at which two losses count as tied.
pub const TIE_DECIMALS: i32 = 5;

pub fn tie_key(loss: f64) -> f64 {
    (loss * 10f64.powi(TIE_DECIMALS)).round()
}

pub fn losses_tie(a: f64, b: f64) -> bool {
    tie_key(a) == tie_key(b)
}

/// Min-max rescaling to [0, 1]; all-equal inputs map to 0. Returns `None`
/// when fewer than two entries are finite.
pub fn rescale_losses(losses: &[f64]) -> Option<Vec<f64>> {
    let finite: Vec<f64> = losses.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return None;
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    Some(
        losses
            .iter()
            .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect(),
    )
}

/// Loss of one system on one dataset; `None` marks a failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    pub system: String,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub system: String,
    pub loss: Option<f64>,
    pub rescaled_loss: Option<f64>,
    pub rank: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub system: String,
    /// Averages over datasets on which every system succeeded.
    pub mean_rescaled_loss: Option<f64>,
    pub mean_rank: Option<f64>,
    /// Datasets on which this system beats / loses to the reference system.
    pub wins: usize,
    pub losses: usize,
    pub failures: usize,
    pub champion: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub reference: String,
    pub systems: Vec<String>,
    pub datasets: Vec<String>,
    pub complete_datasets: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SystemSummary>,
    /// `pairwise[i][j]`: datasets where system i has strictly lower loss than j.
    pub pairwise: Vec<Vec<usize>>,
}

/// Builds the report. `reference` (default: first system seen) is the
/// system that wins and losses are counted against.
pub fn build_report(results: &[RunResult], reference: Option<&str>) -> EvalReport {
    let mut systems: Vec<String> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    for r in results {
        if !systems.contains(&r.system) {
            systems.push(r.system.clone());
        }
        if !datasets.contains(&r.dataset) {
            datasets.push(r.dataset.clone());
        }
    }
    let s = systems.len();
    let lookup = |d: &str, sys: &str| -> Option<f64> {
        results
            .iter()
            .find(|r| r.dataset == d && r.system == sys)
            .and_then(|r| r.loss)
            .filter(|v| v.is_finite())
    };
    let reference = reference
        .map(str::to_string)
        .or_else(|| systems.first().cloned())
        .unwrap_or_default();
    let ref_idx = systems.iter().position(|x| *x == reference);

    let mut rows = Vec::new();
    let mut complete = BTreeSet::new();
    let mut rescaled_sum = vec![0.0; s];
    let mut rank_sum = vec![0.0; s];
    let mut wins = vec![0usize; s];
    let mut defeats = vec![0usize; s];
    let mut failures = vec![0usize; s];
    let mut champion = vec![0usize; s];
    let mut pairwise = vec![vec![0usize; s]; s];

    for d in &datasets {
        let losses: Vec<Option<f64>> = systems.iter().map(|sys| lookup(d, sys)).collect();
        for (i, l) in losses.iter().enumerate() {
            if l.is_none() {
                failures[i] += 1;
            }
        }
        for i in 0..s {
            for j in 0..s {
                if let (Some(a), Some(b)) = (losses[i], losses[j]) {
                    if i != j && !losses_tie(a, b) && a < b {
                        pairwise[i][j] += 1;
                    }
                }
            }
        }
        if let Some(r) = ref_idx {
            for i in 0..s {
                if i == r {
                    continue;
                }
                match (losses[i], losses[r]) {
                    (Some(a), Some(b)) if !losses_tie(a, b) => {
                        if a < b {
                            wins[i] += 1;
                        } else {
                            defeats[i] += 1;
                        }
                    }
                    (Some(_), None) => wins[i] += 1,
                    (None, Some(_)) => defeats[i] += 1,
                    _ => {}
                }
            }
        }
        let finite: Vec<f64> = losses.iter().flatten().copied().collect();
        if let Some(best) = finite.iter().copied().reduce(f64::min) {
            for (i, l) in losses.iter().enumerate() {
                if l.is_some_and(|v| losses_tie(v, best)) {
                    champion[i] += 1;
                }
            }
        }
        let all_ok = losses.iter().all(Option::is_some) && s >= 2;
        let (rescaled, ranks) = if all_ok {
            let vals: Vec<f64> = losses.iter().map(|l| l.unwrap()).collect();
            let keys: Vec<f64> = vals.iter().map(|&v| tie_key(v)).collect();
            (rescale_losses(&vals), Some(mean_ranks(&keys)))
        } else {
            (None, None)
        };
        if let (Some(rs), Some(rk)) = (&rescaled, &ranks) {
            complete.insert(d.clone());
            for i in 0..s {
                rescaled_sum[i] += rs[i];
                rank_sum[i] += rk[i];
            }
        }
        for (i, sys) in systems.iter().enumerate() {
            rows.push(ReportRow {
                dataset: d.clone(),
                system: sys.clone(),
                loss: losses[i],
                rescaled_loss: rescaled.as_ref().map(|r| r[i]),
                rank: ranks.as_ref().map(|r| r[i]),
            });
        }
    }
    let nc = complete.len();
    let summary = systems
        .iter()
        .enumerate()
        .map(|(i, sys)| SystemSummary {
            system: sys.clone(),
            mean_rescaled_loss: (nc > 0).then(|| rescaled_sum[i] / nc as f64),
            mean_rank: (nc > 0).then(|| rank_sum[i] / nc as f64),
            wins: wins[i],
            losses: defeats[i],
            failures: failures[i],
            champion: champion[i],
        })
        .collect();
    EvalReport {
        reference,
        complete_datasets: datasets.iter().filter(|d| complete.contains(*d)).cloned().collect(),
        systems,
        datasets,
        rows,
        summary,
        pairwise,
    }
}

impl EvalReport {
    pub fn summary_for(&self, system: &str) -> Option<&SystemSummary> {
        self.summary.iter().find(|s| s.system == system)
    }

    /// `report.csv`: one line per (dataset, system).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dataset", "system", "loss", "rescaled_loss", "rank"])?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.dataset.clone(),
                r.system.clone(),
                fmt(r.loss),
                fmt(r.rescaled_loss),
                fmt(r.rank),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(d: &str, s: &str, l: Option<f64>) -> RunResult {
        RunResult {
            dataset: d.into(),
            system: s.into(),
            loss: l,
        }
    }

    #[test]
    fn rescale_spans_unit_interval() {
        let r = rescale_losses(&[0.2, 0.5, 0.8]).unwrap();
        for (a, b) in r.iter().zip([0.0, 0.5, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(rescale_losses(&[0.3, 0.3]).unwrap(), vec![0.0, 0.0]);
        assert!(rescale_losses(&[0.3]).is_none());
    }

    #[test]
    fn wins_and_losses_against_reference() {
        let mut results = Vec::new();
        for (i, (a, b)) in [(0.1, 0.2), (0.1, 0.3), (0.2, 0.25), (0.5, 0.4)].iter().enumerate() {
            results.push(run(&format!("d{i}"), "B", Some(*b)));
            results.push(run(&format!("d{i}"), "A", Some(*a)));
        }
        let report = build_report(&results, Some("B"));
        let a = report.summary_for("A").unwrap();
        assert_eq!((a.wins, a.losses), (3, 1));
        assert_eq!(a.champion, 3);
        assert_eq!(a.mean_rank, Some(1.25));
    }

    #[test]
    fn failures_exclude_dataset_from_averages() {
        let results = vec![
            run("d0", "A", Some(0.1)),
            run("d0", "B", Some(0.2)),
            run("d1", "A", None),
            run("d1", "B", Some(0.2)),
        ];
        let report = build_report(&results, None);
        assert_eq!(report.complete_datasets, vec!["d0".to_string()]);
        assert_eq!(report.summary_for("A").unwrap().failures, 1);
        assert_eq!(report.summary_for("B").unwrap().mean_rescaled_loss, Some(1.0));
    }

    #[test]
    fn five_decimal_ties() {
        assert!(losses_tie(0.123456, 0.123459));
        assert!(!losses_tie(0.12345, 0.12347));
        let results = vec![run("d", "A", Some(0.123456)), run("d", "B", Some(0.123459))];
        let r = build_report(&results, None);
        assert_eq!(r.rows[0].rank, Some(1.5));
        assert_eq!(r.summary_for("B").unwrap().wins, 0);
    }
}
