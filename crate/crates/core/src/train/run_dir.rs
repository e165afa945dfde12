use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Evaluation;
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// One row of the per-epoch log. Epoch 0 is the evaluation before any
/// update and has no training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

impl EpochRecord {
    pub fn new(epoch: usize, train_loss: Option<f64>, v: &Evaluation) -> Self {
        Self {
            epoch,
            train_loss,
            val_loss: v.loss,
            val_accuracy: v.metrics.accuracy,
            val_precision: v.metrics.precision,
            val_recall: v.metrics.recall,
            val_f1: v.metrics.f1,
        }
    }
}

/// Output directory of a training stage: configuration snapshot, epoch log,
/// best checkpoint and final state.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Creates the directory and clears any previous epoch log.
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let metrics = root.join(METRICS_FILE);
        if metrics.exists() {
            fs::remove_file(&metrics).map_err(|e| Error::io(&metrics, e))?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn best_checkpoint(&self) -> PathBuf {
        self.path(BEST_CHECKPOINT)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn append_epoch(&self, rec: &EpochRecord) -> Result<()> {
        let path = self.path(METRICS_FILE);
        let fresh = !path.exists();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        w.serialize(rec)?;
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn read_epochs(&self) -> Result<Vec<EpochRecord>> {
        let mut r = crate::error::csv_reader(&self.path(METRICS_FILE))?;
        Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
    }
}
