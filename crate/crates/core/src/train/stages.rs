use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fit, mix_seed, FitOutcome, RunDir, TrainConfig, WeatherSource};
use crate::dataset::PreparedCorpus;
use crate::error::{Error, Result};
use crate::model::{init_from_vanilla, Checkpoint, Model, ModelConfig, TrainingStage};

const INIT_STREAM: u64 = 1;
const RANDOM_WEATHER_STREAM: u64 = 2;

/// Weather fed to a multimodal stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherArm {
    Real,
    Random,
}

impl WeatherArm {
    pub fn source(&self, seed: u64) -> WeatherSource {
        match self {
            WeatherArm::Real => WeatherSource::Real,
            WeatherArm::Random => WeatherSource::Random {
                seed: mix_seed(seed, RANDOM_WEATHER_STREAM),
            },
        }
    }
}

fn dir(root: Option<&Path>, name: &str) -> Result<Option<RunDir>> {
    root.map(|r| RunDir::create(&r.join(name))).transpose()
}

fn require_weather(corpus: &PreparedCorpus) -> Result<()> {
    let missing = corpus
        .train
        .iter()
        .chain(&corpus.val)
        .find(|s| s.weather.is_none());
    match missing {
        Some(s) => Err(Error::Training(format!(
            "multimodal training needs weather; fire {} offset {} has none",
            s.fire_id, s.offset
        ))),
        None => Ok(()),
    }
}

/// Image-only training from a fresh initialisation.
pub fn train_vanilla(corpus: &PreparedCorpus, model: &ModelConfig, cfg: &TrainConfig, run_dir: Option<&RunDir>) -> Result<FitOutcome> {
    let model = Model::new(model.with_fusion(false), mix_seed(cfg.optimizer.seed, INIT_STREAM))?;
    if let Some(d) = run_dir {
        d.write_json("config.json", &(model.config(), cfg))?;
    }
    fit(model, TrainingStage::Vanilla, &corpus.train, &corpus.val, &corpus.prep, cfg, WeatherSource::Off, run_dir)
}

/// Further image-only training of a vanilla checkpoint.
pub fn continue_vanilla(corpus: &PreparedCorpus, vanilla: &Checkpoint, cfg: &TrainConfig, run_dir: Option<&RunDir>) -> Result<FitOutcome> {
    if vanilla.stage != TrainingStage::Vanilla {
        return Err(Error::Training("baseline must start from a vanilla checkpoint".into()));
    }
    let model = vanilla.to_model()?;
    if let Some(d) = run_dir {
        d.write_json("config.json", &(model.config(), cfg))?;
    }
    fit(model, TrainingStage::Vanilla, &corpus.train, &corpus.val, &corpus.prep, cfg, WeatherSource::Off, run_dir)
}

/// Multimodal training initialised from `vanilla`, with real or random
/// weather.
pub fn run_control_arm(
    corpus: &PreparedCorpus,
    vanilla: &Checkpoint,
    multimodal: &ModelConfig,
    arm: WeatherArm,
    cfg: &TrainConfig,
    run_dir: Option<&RunDir>,
) -> Result<FitOutcome> {
    if arm == WeatherArm::Real {
        require_weather(corpus)?;
    }
    let seed = cfg.optimizer.seed;
    let init = init_from_vanilla(vanilla, &multimodal.with_fusion(true), mix_seed(seed, INIT_STREAM))?;
    let model = init.to_model()?;
    if let Some(d) = run_dir {
        d.write_json("config.json", &(model.config(), cfg, arm))?;
    }
    fit(model, TrainingStage::Multimodal, &corpus.train, &corpus.val, &corpus.prep, cfg, arm.source(seed), run_dir)
}

#[derive(Debug, Clone)]
pub struct StagePair {
    pub vanilla: FitOutcome,
    pub multimodal: FitOutcome,
}

/// Image-only stage followed by weather-fused fine-tuning from its best
/// weights. With `root`, each stage writes to its own subdirectory.
pub fn two_stage_train(
    corpus: &PreparedCorpus,
    model: &ModelConfig,
    stage_one: &TrainConfig,
    stage_two: &TrainConfig,
    root: Option<&Path>,
) -> Result<StagePair> {
    require_weather(corpus)?;
    let vanilla = train_vanilla(corpus, model, stage_one, dir(root, "vanilla")?.as_ref())?;
    let multimodal = run_control_arm(
        corpus,
        &vanilla.best,
        model,
        WeatherArm::Real,
        stage_two,
        dir(root, "multimodal")?.as_ref(),
    )?;
    Ok(StagePair { vanilla, multimodal })
}
