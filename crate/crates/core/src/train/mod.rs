//! Optimisation loop, checkpoint selection and the two-stage procedure.

mod loss;
mod run_dir;
mod stages;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{compute_losses, loss_graph, LossBreakdown, LossConfig};
pub use run_dir::{EpochRecord, RunDir};
pub use stages::{continue_vanilla, run_control_arm, train_vanilla, two_stage_train, StagePair, WeatherArm};

use crate::dataset::{AlignedSample, FramePrep};
use crate::error::{Error, Result};
use crate::eval::{confusion_counts, prf_metrics, PredictionLog, PredictionRow, PrfMetrics, DEFAULT_THRESHOLD};
use crate::image::{augment, augment_mask, AugmentParams, AugmentRanges};
use crate::model::{Checkpoint, Model, ModelInput, RngState, TrainingStage};
use crate::nn::{AdamW, AdamWConfig, Graph, Tensor};
use crate::weather::{random_weather_vector, WeatherVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamWConfig::default();
        Self {
            learning_rate: a.learning_rate,
            weight_decay: a.weight_decay,
            batch_size: 2,
            max_epochs: 25,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} is invalid", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay {} is invalid", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::Config("optimizer moments out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyStopPolicy {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopPolicy {
    fn default() -> Self {
        Self {
            patience: 4,
            min_delta: 0.0,
        }
    }
}

/// Everything that controls one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
    /// Off trains for the full epoch budget.
    pub early_stopping: bool,
    pub early_stop: EarlyStopPolicy,
    pub augmentation: bool,
    pub augment: AugmentRanges,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            loss: LossConfig::default(),
            early_stopping: true,
            early_stop: EarlyStopPolicy::default(),
            augmentation: true,
            augment: AugmentRanges::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn early_stop_policy(&self) -> Option<&EarlyStopPolicy> {
        self.early_stopping.then_some(&self.early_stop)
    }

    pub fn augment_ranges(&self) -> Option<&AugmentRanges> {
        self.augmentation.then_some(&self.augment)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.loss.validate()?;
        let p = self.early_stop;
        if p.patience == 0 || !(p.min_delta >= 0.0) {
            return Err(Error::Config("early stopping needs patience >= 1 and min_delta >= 0".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

/// Where a sample's weather vector comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeatherSource {
    /// Image-only model.
    Off,
    /// The aligned station vector.
    Real,
    /// Standard normal draws, fixed per sample and epoch.
    Random { seed: u64 },
}

/// Epoch key used for random weather outside training.
const EVAL_EPOCH: u64 = u64::MAX;

/// Derives an independent seed for a sub-stream.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(a << 6).wrapping_add(a >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

impl WeatherSource {
    pub fn weather_for(&self, sample: &AlignedSample, epoch: u64) -> Result<Option<WeatherVector>> {
        match self {
            WeatherSource::Off => Ok(None),
            WeatherSource::Real => sample.weather.clone().map(Some).ok_or_else(|| {
                Error::Training(format!(
                    "fire {} offset {} has no weather vector",
                    sample.fire_id, sample.offset
                ))
            }),
            WeatherSource::Random { seed } => {
                let key = mix_seed(mix_seed(*seed, epoch), mix_seed(fnv1a(&sample.fire_id), sample.offset as u64));
                Ok(Some(random_weather_vector(key, sample.time)))
            }
        }
    }
}

fn check_source(model: &Model, source: WeatherSource) -> Result<()> {
    let fused = model.config().fusion_enabled;
    if fused == matches!(source, WeatherSource::Off) {
        return Err(Error::Training(format!(
            "weather source {source:?} does not suit a model with fusion {}",
            if fused { "enabled" } else { "disabled" }
        )));
    }
    Ok(())
}

/// Model input and tile labels for one sample, optionally augmented. The
/// same augmentation is applied to both frames.
pub fn sample_input(
    sample: &AlignedSample,
    prep: &FramePrep,
    augmentation: Option<&AugmentParams>,
    weather: Option<WeatherVector>,
) -> Result<(ModelInput, Vec<bool>)> {
    match augmentation.filter(|p| !p.is_identity()) {
        None => Ok((
            ModelInput::from_grids(&sample.previous.grid, &sample.current.grid, weather),
            sample.tile_labels.clone(),
        )),
        Some(p) => {
            let prev = prep.grid(&augment(&sample.previous.image, p), &augment_mask(&sample.previous.mask, p))?;
            let cur = prep.grid(&augment(&sample.current.image, p), &augment_mask(&sample.current.mask, p))?;
            let labels = cur.labels.clone();
            Ok((ModelInput::from_grids(&prev, &cur, weather), labels))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
}

/// One shuffled pass in mini-batches. Gradients are averaged over each
/// batch before the optimizer step.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    model: &mut Model,
    optimizer: &mut AdamW,
    data: &[AlignedSample],
    prep: &FramePrep,
    cfg: &TrainConfig,
    source: WeatherSource,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::Training("no training samples".into()));
    }
    check_source(model, source)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut steps = 0;
    for batch in order.chunks(cfg.optimizer.batch_size) {
        let mut grads: Option<Vec<Tensor>> = None;
        for &i in batch {
            let sample = &data[i];
            let aug = cfg.augment_ranges().map(|r| AugmentParams::sample(rng.random(), r));
            let weather = source.weather_for(sample, epoch as u64)?;
            let (input, labels) = sample_input(sample, prep, aug.as_ref(), weather)?;
            let mut g = Graph::new(model.params());
            let vars = model.forward_graph(&mut g, &input)?;
            let loss = loss_graph(&mut g, &vars, &labels, sample.image_label, &cfg.loss);
            let value = g.value(loss).iter().next().copied().unwrap_or(f64::NAN);
            if !value.is_finite() {
                return Err(Error::Training(format!(
                    "loss diverged in epoch {epoch} at fire {} offset {}",
                    sample.fire_id, sample.offset
                )));
            }
            total += value;
            let pg = g.backward(loss).param_grads(model.params());
            match grads.as_mut() {
                None => grads = Some(pg),
                Some(acc) => acc.iter_mut().zip(pg).for_each(|(a, b)| *a += &b),
            }
        }
        let mut grads = grads.expect("non-empty batch");
        let k = 1.0 / batch.len() as f64;
        grads.iter_mut().for_each(|t| *t *= k);
        optimizer.step(model.params_mut(), &grads);
        steps += 1;
    }
    Ok(EpochStats {
        epoch,
        mean_loss: total / data.len() as f64,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub metrics: PrfMetrics,
    pub log: PredictionLog,
}

/// Evaluation-mode predictions for every sample.
pub fn predict(model: &Model, data: &[AlignedSample], source: WeatherSource, loss: &LossConfig) -> Result<(PredictionLog, f64)> {
    check_source(model, source)?;
    let mut rows = Vec::with_capacity(data.len());
    let mut total = 0.0;
    for s in data {
        let weather = source.weather_for(s, EVAL_EPOCH)?;
        let out = model.forward(&ModelInput::from_grids(&s.previous.grid, &s.current.grid, weather))?;
        total += compute_losses(&out, &s.tile_labels, s.image_label, loss)?.total;
        rows.push(PredictionRow {
            fire_id: s.fire_id.clone(),
            minute_offset: s.offset,
            image_probability: out.image_probability(),
            image_label: s.image_label,
        });
    }
    Ok((PredictionLog::new(rows)?, total / data.len().max(1) as f64))
}

/// Mean loss and image metrics without augmentation or parameter updates.
pub fn validate(model: &Model, data: &[AlignedSample], source: WeatherSource, loss: &LossConfig, threshold: f64) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Training("empty validation set".into()));
    }
    let (log, loss) = predict(model, data, source, loss)?;
    let metrics = prf_metrics(&confusion_counts(&log, threshold)?);
    Ok(Evaluation { loss, metrics, log })
}

/// Progress of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub history: Vec<EpochRecord>,
}

impl Default for TrainState {
    fn default() -> Self {
        Self {
            epoch: 0,
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
            history: Vec::new(),
        }
    }
}

impl TrainState {
    /// Append an epoch; true when it is the new best.
    pub fn record(&mut self, rec: EpochRecord, min_delta: f64) -> bool {
        self.epoch = rec.epoch;
        let improved = rec.val_loss < self.best_val_loss - min_delta;
        if improved {
            self.best_val_loss = rec.val_loss;
            self.best_epoch = rec.epoch;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }
        self.history.push(rec);
        improved
    }

    pub fn should_stop(&self, policy: Option<&EarlyStopPolicy>) -> bool {
        policy.is_some_and(|p| self.epochs_since_improvement >= p.patience)
    }
}

/// Result of fitting one stage.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub best: Checkpoint,
    pub state: TrainState,
}

/// Train from `model`, validating before the first update (epoch 0) and
/// after every epoch, and keep the lowest-validation-loss weights.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    mut model: Model,
    stage: TrainingStage,
    train: &[AlignedSample],
    val: &[AlignedSample],
    prep: &FramePrep,
    cfg: &TrainConfig,
    source: WeatherSource,
    run_dir: Option<&RunDir>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.optimizer.seed);
    let mut optimizer = AdamW::new(cfg.optimizer.adamw(), model.params());
    let min_delta = cfg.early_stop_policy().map_or(0.0, |p| p.min_delta);
    let mut state = TrainState::default();

    let snapshot = |model: &Model, rng: &ChaCha8Rng, epoch: usize, val_loss: f64| {
        let mut c = Checkpoint::from_model(model, stage, Some(val_loss));
        c.epoch = Some(epoch);
        c.rng = Some(RngState::capture(rng));
        c
    };

    let v = validate(&model, val, source, &cfg.loss, cfg.threshold)?;
    let rec = EpochRecord::new(0, None, &v);
    if let Some(d) = run_dir {
        d.append_epoch(&rec)?;
    }
    state.record(rec, min_delta);
    let mut best = snapshot(&model, &rng, 0, v.loss);

    for epoch in 1..=cfg.optimizer.max_epochs {
        let stats = train_epoch(&mut model, &mut optimizer, train, prep, cfg, source, epoch, &mut rng)?;
        let v = validate(&model, val, source, &cfg.loss, cfg.threshold)?;
        let rec = EpochRecord::new(epoch, Some(stats.mean_loss), &v);
        log::info!(
            "{} epoch {epoch}: train {:.4} val {:.4} f1 {:.3}",
            stage.as_str(),
            stats.mean_loss,
            v.loss,
            v.metrics.f1
        );
        if let Some(d) = run_dir {
            d.append_epoch(&rec)?;
        }
        if state.record(rec, min_delta) {
            best = snapshot(&model, &rng, epoch, v.loss);
        }
        if state.should_stop(cfg.early_stop_policy()) {
            break;
        }
    }
    if let Some(d) = run_dir {
        best.save(&d.best_checkpoint())?;
        d.write_json("state.json", &state)?;
    }
    Ok(FitOutcome { best, state })
}

/// Convenience for callers that only need the directory path.
pub fn open_run_dir(path: Option<&Path>) -> Result<Option<RunDir>> {
    path.map(RunDir::create).transpose()
}

#[cfg(test)]
mod tests;
