//! Image-level classification metrics and time-to-detection.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decision threshold on image probability used throughout.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Minutes after ignition searched for a first detection.
pub const DEFAULT_HORIZON: i32 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub fire_id: String,
    pub minute_offset: i32,
    pub image_probability: f64,
    pub image_label: bool,
}

/// Per-image predictions, one row per (fire, offset).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionLog {
    pub rows: Vec<PredictionRow>,
}

impl PredictionLog {
    pub fn new(rows: Vec<PredictionRow>) -> Result<Self> {
        let log = Self { rows };
        log.validate()?;
        Ok(log)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.rows {
            if !(0.0..=1.0).contains(&r.image_probability) {
                return Err(Error::Eval(format!(
                    "fire {} offset {}: probability {} outside [0, 1]",
                    r.fire_id, r.minute_offset, r.image_probability
                )));
            }
            if !seen.insert((r.fire_id.as_str(), r.minute_offset)) {
                return Err(Error::Eval(format!(
                    "fire {} offset {} appears twice",
                    r.fire_id, r.minute_offset
                )));
            }
        }
        Ok(())
    }

    /// Rows grouped by fire, each sorted by offset.
    pub fn by_fire(&self) -> BTreeMap<&str, Vec<&PredictionRow>> {
        let mut out: BTreeMap<&str, Vec<&PredictionRow>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.fire_id.as_str()).or_default().push(r);
        }
        for rows in out.values_mut() {
            rows.sort_by_key(|r| r.minute_offset);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = crate::error::csv_writer(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = crate::error::csv_reader(path)?;
        let rows = r.deserialize().collect::<Result<Vec<PredictionRow>, _>>()?;
        Self::new(rows).map_err(|e| Error::parse(path, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Counts with a prediction positive iff probability >= threshold.
pub fn confusion_counts(log: &PredictionLog, threshold: f64) -> Result<ConfusionCounts> {
    if log.is_empty() {
        return Err(Error::Eval("empty prediction log".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Eval(format!("threshold {threshold} outside (0, 1)")));
    }
    let mut c = ConfusionCounts::default();
    for r in &log.rows {
        match (r.image_probability >= threshold, r.image_label) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrfMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Zero denominators give zero precision, recall or F1.
pub fn prf_metrics(c: &ConfusionCounts) -> PrfMetrics {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    PrfMetrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtdResult {
    /// First detected offset per fire; `None` for censored fires.
    pub per_fire: BTreeMap<String, Option<i32>>,
    /// Mean over detected fires; `None` when every fire is censored.
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub censored: usize,
}

/// First offset in `0..horizon` with a positive prediction, per fire.
pub fn time_to_detection(log: &PredictionLog, threshold: f64, horizon: i32) -> Result<TtdResult> {
    if log.is_empty() {
        return Err(Error::Eval("empty prediction log".into()));
    }
    if horizon <= 0 {
        return Err(Error::Eval(format!("horizon {horizon} must be positive")));
    }
    let mut per_fire = BTreeMap::new();
    for (fire, rows) in log.by_fire() {
        let positive: Vec<&PredictionRow> = rows
            .into_iter()
            .filter(|r| (0..horizon).contains(&r.minute_offset))
            .collect();
        if positive.len() != horizon as usize {
            let have: std::collections::BTreeSet<i32> = positive.iter().map(|r| r.minute_offset).collect();
            let missing: Vec<String> = (0..horizon)
                .filter(|o| !have.contains(o))
                .map(|o| o.to_string())
                .collect();
            return Err(Error::Eval(format!(
                "fire {fire} lacks frames at offsets {}",
                missing.join(", ")
            )));
        }
        let hit = positive
            .iter()
            .find(|r| r.image_probability >= threshold)
            .map(|r| r.minute_offset);
        per_fire.insert(fire.to_string(), hit);
    }
    let detected: Vec<f64> = per_fire.values().flatten().map(|&t| t as f64).collect();
    let censored = per_fire.len() - detected.len();
    let (mean, sd) = if detected.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_sd(&detected);
        (Some(m), Some(s))
    };
    Ok(TtdResult {
        per_fire,
        mean,
        sd,
        censored,
    })
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n > 0, "mean of no values");
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}
