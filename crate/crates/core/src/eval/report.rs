//! Per-run and aggregated metric reports and their tabular form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion_counts, mean_sd, prf_metrics, time_to_detection, PredictionLog};
use crate::error::{Error, Result};

/// Metrics of one evaluated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub arm: String,
    pub seed: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean minutes to first detection over detected fires.
    pub ttd_mean: Option<f64>,
    /// Spread of detection times across fires.
    pub ttd_sd: Option<f64>,
    pub censored_fire_count: usize,
    pub fire_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        (!values.is_empty()).then(|| {
            let (mean, sd) = mean_sd(values);
            Self { mean, sd }
        })
    }
}

/// One arm's metrics across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub arm: String,
    pub n_runs: usize,
    pub accuracy: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
    /// Over runs with at least one detected fire; `None` if there are none.
    pub ttd: Option<Summary>,
    pub censored_fire_count: usize,
    pub runs: Vec<RunMetrics>,
}

/// Score a single prediction log.
pub fn evaluate_log(log: &PredictionLog, arm: &str, seed: u64, threshold: f64, horizon: i32) -> Result<RunMetrics> {
    let prf = prf_metrics(&confusion_counts(log, threshold)?);
    let ttd = time_to_detection(log, threshold, horizon)?;
    Ok(RunMetrics {
        arm: arm.to_string(),
        seed,
        accuracy: prf.accuracy,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        ttd_mean: ttd.mean,
        ttd_sd: ttd.sd,
        censored_fire_count: ttd.censored,
        fire_count: ttd.per_fire.len(),
    })
}

/// Mean and sample SD of every metric across runs of one arm.
pub fn aggregate_runs(runs: &[RunMetrics]) -> Result<MetricsReport> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Eval("no runs to aggregate".into()))?;
    if let Some(r) = runs.iter().find(|r| r.arm != first.arm) {
        return Err(Error::Eval(format!(
            "cannot aggregate arms {} and {}",
            first.arm, r.arm
        )));
    }
    let col = |f: fn(&RunMetrics) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let summary = |f: fn(&RunMetrics) -> f64| Summary::of(&col(f)).expect("non-empty");
    let ttds: Vec<f64> = runs.iter().filter_map(|r| r.ttd_mean).collect();
    Ok(MetricsReport {
        arm: first.arm.clone(),
        n_runs: runs.len(),
        accuracy: summary(|r| r.accuracy),
        precision: summary(|r| r.precision),
        recall: summary(|r| r.recall),
        f1: summary(|r| r.f1),
        ttd: Summary::of(&ttds),
        censored_fire_count: runs.iter().map(|r| r.censored_fire_count).sum(),
        runs: runs.to_vec(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    arm: String,
    n_runs: usize,
    ttd_mean: Option<f64>,
    ttd_sd: Option<f64>,
    accuracy_mean: f64,
    accuracy_sd: f64,
    f1_mean: f64,
    f1_sd: f64,
    precision_mean: f64,
    precision_sd: f64,
    recall_mean: f64,
    recall_sd: f64,
    censored_fire_count: usize,
}

impl From<&MetricsReport> for TableRow {
    fn from(r: &MetricsReport) -> Self {
        Self {
            arm: r.arm.clone(),
            n_runs: r.n_runs,
            ttd_mean: r.ttd.map(|s| s.mean),
            ttd_sd: r.ttd.map(|s| s.sd),
            accuracy_mean: r.accuracy.mean,
            accuracy_sd: r.accuracy.sd,
            f1_mean: r.f1.mean,
            f1_sd: r.f1.sd,
            precision_mean: r.precision.mean,
            precision_sd: r.precision.sd,
            recall_mean: r.recall.mean,
            recall_sd: r.recall.sd,
            censored_fire_count: r.censored_fire_count,
        }
    }
}

/// Comparison table, one row per arm.
pub fn write_table(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    for r in reports {
        w.serialize(TableRow::from(r))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-run values backing a table.
pub fn write_runs(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    for run in reports.iter().flat_map(|r| &r.runs) {
        w.serialize(run)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_runs(path: &Path) -> Result<Vec<RunMetrics>> {
    let mut r = crate::error::csv_reader(path)?;
    Ok(r.deserialize().collect::<Result<Vec<RunMetrics>, _>>()?)
}

/// Reads a table and the per-run file written beside it, checking that the
/// stored aggregates match the runs.
pub fn read_table(table: &Path, runs: &Path) -> Result<Vec<MetricsReport>> {
    let mut r = crate::error::csv_reader(table)?;
    let rows = r.deserialize().collect::<Result<Vec<TableRow>, _>>()?;
    let all_runs = read_runs(runs)?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let arm_runs: Vec<RunMetrics> = all_runs.iter().filter(|r| r.arm == row.arm).cloned().collect();
        let report = aggregate_runs(&arm_runs).map_err(|e| Error::parse(runs, e.to_string()))?;
        let stored = MetricsReport {
            arm: row.arm.clone(),
            n_runs: row.n_runs,
            accuracy: Summary {
                mean: row.accuracy_mean,
                sd: row.accuracy_sd,
            },
            precision: Summary {
                mean: row.precision_mean,
                sd: row.precision_sd,
            },
            recall: Summary {
                mean: row.recall_mean,
                sd: row.recall_sd,
            },
            f1: Summary {
                mean: row.f1_mean,
                sd: row.f1_sd,
            },
            ttd: match (row.ttd_mean, row.ttd_sd) {
                (Some(mean), Some(sd)) => Some(Summary { mean, sd }),
                _ => None,
            },
            censored_fire_count: row.censored_fire_count,
            runs: arm_runs,
        };
        if stored != report {
            return Err(Error::parse(
                table,
                format!("row {} disagrees with its per-run values", row.arm),
            ));
        }
        out.push(stored);
    }
    Ok(out)
}

/// Fixed-width text rendering of the table.
pub fn format_table(reports: &[MetricsReport]) -> String {
    let pct = |s: Summary| format!("{:6.2} ± {:5.2}", 100.0 * s.mean, 100.0 * s.sd);
    let mut out = format!(
        "{:<16} {:>4} {:>15} {:>15} {:>15} {:>15} {:>15}\n",
        "arm", "runs", "TTD (min)", "accuracy", "F1", "precision", "recall"
    );
    for r in reports {
        let ttd = r
            .ttd
            .map(|s| format!("{:6.2} ± {:5.2}", s.mean, s.sd))
            .unwrap_or_else(|| "n/a".into());
        out.push_str(&format!(
            "{:<16} {:>4} {:>15} {:>15} {:>15} {:>15} {:>15}\n",
            r.arm,
            r.n_runs,
            ttd,
            pct(r.accuracy),
            pct(r.f1),
            pct(r.precision),
            pct(r.recall)
        ));
    }
    out
}
