//! Baseline, random-weather and real-weather arms over several seeds.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{time_to_detection, PredictionLog, DEFAULT_HORIZON, DEFAULT_THRESHOLD};
use super::plot::{metric_distributions_svg, ttd_histogram_svg};
use super::report::{aggregate_runs, evaluate_log, format_table, write_runs, write_table, MetricsReport};
use crate::dataset::PreparedCorpus;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::{
    continue_vanilla, mix_seed, predict, run_control_arm, train_vanilla, FitOutcome, RunDir, TrainConfig,
    WeatherArm, WeatherSource,
};

pub const TABLE_FILE: &str = "table.csv";
pub const RUNS_FILE: &str = "runs.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Baseline,
    RandomWeather,
    RealWeather,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Baseline, Arm::RandomWeather, Arm::RealWeather];

    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::RandomWeather => "random_weather",
            Arm::RealWeather => "real_weather",
        }
    }

    /// Weather fed to this arm's model for a given training seed.
    pub fn source(&self, seed: u64) -> WeatherSource {
        match self {
            Arm::Baseline => WeatherSource::Off,
            Arm::RandomWeather => WeatherArm::Random.source(seed),
            Arm::RealWeather => WeatherArm::Real.source(seed),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown arm {s:?}; expected baseline, random_weather or real_weather")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub model: ModelConfig,
    /// Image-only pretraining shared by the arms of a seed.
    pub stage_one: TrainConfig,
    /// Continued training of every arm.
    pub stage_two: TrainConfig,
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub horizon: i32,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            stage_one: TrainConfig {
                early_stopping: false,
                ..TrainConfig::default()
            },
            stage_two: TrainConfig::default(),
            seeds: (0..8).collect(),
            threshold: DEFAULT_THRESHOLD,
            horizon: DEFAULT_HORIZON,
        }
    }
}

/// Test-set predictions of one trained arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmRun {
    pub arm: Arm,
    pub seed: u64,
    pub log: PredictionLog,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    /// One report per arm, in `Arm::ALL` order.
    pub reports: Vec<MetricsReport>,
    pub runs: Vec<ArmRun>,
}

fn with_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    let mut c = cfg.clone();
    c.optimizer.seed = seed;
    c
}

fn context(arm: &str, seed: u64) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Training(format!("arm {arm}, seed {seed}: {e}"))
}

pub fn prediction_file(arm: Arm, seed: u64) -> String {
    format!("predictions_{arm}_seed{seed}.csv")
}

/// Parses names written by [`prediction_file`].
pub fn parse_prediction_file(name: &str) -> Option<(Arm, u64)> {
    let stem = name.strip_prefix("predictions_")?.strip_suffix(".csv")?;
    let (arm, seed) = stem.rsplit_once("_seed")?;
    Some((arm.parse().ok()?, seed.parse().ok()?))
}

/// Trains and tests every arm for every seed. Per seed, one image-only model
/// is trained and its best weights seed all three arms, which then train
/// with the same stage-two seed.
pub fn run_experiment_suite(corpus: &PreparedCorpus, cfg: &SuiteConfig, out: Option<&Path>) -> Result<SuiteResult> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("suite needs at least one seed".into()));
    }
    if corpus.test.is_empty() {
        return Err(Error::Eval("test split is empty".into()));
    }
    let dir = |seed: u64, name: &str| -> Result<Option<RunDir>> {
        out.map(|o| RunDir::create(&o.join(format!("seed{seed}")).join(name))).transpose()
    };
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        log::info!("suite seed {seed}: image-only stage");
        let stage_one = with_seed(&cfg.stage_one, mix_seed(seed, 100));
        let vanilla = train_vanilla(corpus, &cfg.model, &stage_one, dir(seed, "vanilla")?.as_ref())
            .map_err(context("vanilla", seed))?;
        let two_seed = mix_seed(seed, 200);
        let stage_two = with_seed(&cfg.stage_two, two_seed);
        for arm in Arm::ALL {
            log::info!("suite seed {seed}: {arm}");
            let d = dir(seed, arm.as_str())?;
            let trained: FitOutcome = match arm {
                Arm::Baseline => continue_vanilla(corpus, &vanilla.best, &stage_two, d.as_ref()),
                Arm::RandomWeather => {
                    run_control_arm(corpus, &vanilla.best, &cfg.model, WeatherArm::Random, &stage_two, d.as_ref())
                }
                Arm::RealWeather => {
                    run_control_arm(corpus, &vanilla.best, &cfg.model, WeatherArm::Real, &stage_two, d.as_ref())
                }
            }
            .map_err(context(arm.as_str(), seed))?;
            let model = trained.best.to_model()?;
            let (log, _) = predict(&model, &corpus.test, arm.source(two_seed), &stage_two.loss)
                .map_err(context(arm.as_str(), seed))?;
            if let Some(o) = out {
                log.write_csv(&o.join(prediction_file(arm, seed)))?;
            }
            runs.push(ArmRun { arm, seed, log });
        }
    }
    let reports = summarize(&runs, cfg.threshold, cfg.horizon)?;
    if let Some(o) = out {
        write_outputs(o, &reports, &runs, cfg.horizon, cfg.threshold)?;
    }
    Ok(SuiteResult { reports, runs })
}

/// Aggregate per-arm metrics, in `Arm::ALL` order, skipping absent arms.
pub fn summarize(runs: &[ArmRun], threshold: f64, horizon: i32) -> Result<Vec<MetricsReport>> {
    let mut reports = Vec::new();
    for arm in Arm::ALL {
        let per_run = runs
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| {
                evaluate_log(&r.log, arm.as_str(), r.seed, threshold, horizon)
                    .map_err(|e| Error::Eval(format!("arm {arm}, seed {}: {e}", r.seed)))
            })
            .collect::<Result<Vec<_>>>()?;
        if !per_run.is_empty() {
            reports.push(aggregate_runs(&per_run)?);
        }
    }
    Ok(reports)
}

/// Table, per-run values, text rendering and plots.
pub fn write_outputs(dir: &Path, reports: &[MetricsReport], runs: &[ArmRun], horizon: i32, threshold: f64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| -> Result<PathBuf> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let mut written = vec![dir.join(TABLE_FILE), dir.join(RUNS_FILE)];
    write_table(&written[0], reports)?;
    write_runs(&written[1], reports)?;
    written.push(write("table.txt", format_table(reports))?);
    written.push(write("metrics.svg", metric_distributions_svg(reports))?);

    let mut series = Vec::new();
    for arm in Arm::ALL {
        let mut ttds = Vec::new();
        let mut censored = 0;
        let mut any = false;
        for r in runs.iter().filter(|r| r.arm == arm) {
            any = true;
            let t = time_to_detection(&r.log, threshold, horizon)?;
            ttds.extend(t.per_fire.values().flatten());
            censored += t.censored;
        }
        if any {
            series.push((arm.as_str().to_string(), ttds, censored));
        }
    }
    written.push(write("ttd_histogram.svg", ttd_histogram_svg(&series, horizon, 2))?);
    Ok(written)
}

/// Prediction logs found in `dir`, named as the suite writes them.
pub fn read_prediction_logs(dir: &Path) -> Result<Vec<ArmRun>> {
    let mut runs = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some((arm, seed)) = path.file_name().and_then(|n| n.to_str()).and_then(parse_prediction_file) else {
            continue;
        };
        runs.push(ArmRun {
            arm,
            seed,
            log: PredictionLog::read_csv(&path)?,
        });
    }
    runs.sort_by_key(|r| (r.arm, r.seed));
    if runs.is_empty() {
        return Err(Error::Eval(format!("no prediction logs in {}", dir.display())));
    }
    Ok(runs)
}
