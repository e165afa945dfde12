use std::path::Path;

use serde_json::json;
use smokeynet::dataset::synthetic::{generate_synthetic_dataset, Coupling};
use smokeynet::dataset::{build_corpus, load_corpus_dir, make_splits, manifest_split, FrameFormat, PreparedCorpus, Split, SplitRequest};
use smokeynet::eval::{
    evaluate_log, format_table, read_prediction_logs, run_experiment_suite, summarize, write_outputs, write_runs,
    aggregate_runs, Arm,
};
use smokeynet::model::{Checkpoint, TrainingStage};
use smokeynet::train::{continue_vanilla, predict, run_control_arm, train_vanilla, RunDir, WeatherArm};
use smokeynet::{Error, Result};

use crate::config::Config;
use crate::{Cli, Command, CouplingArg, EvaluateArgs, FormatArg, PrepareArgs, ReportArgs, StageArg, SuiteArgs, SynthArgs, TrainArgs, WeatherArg};

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    match &cli.command {
        Command::Synth(a) => synth(cfg, a),
        Command::Prepare(a) => prepare(&cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Evaluate(a) => evaluate(&cfg, a),
        Command::Suite(a) => suite(cfg, a),
        Command::Report(a) => report(&cfg, a),
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn emit(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("json value"));
}

fn synth(mut cfg: Config, a: &SynthArgs) -> Result<()> {
    let spec = &mut cfg.synthetic;
    if let Some(n) = a.fires {
        spec.n_fires = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(c) = a.coupling {
        spec.coupling = match c {
            CouplingArg::None => Coupling::None,
            CouplingArg::Discriminative => Coupling::Discriminative,
        };
    }
    let corpus = generate_synthetic_dataset(spec)?;
    let format = match a.format {
        FormatArg::Png => FrameFormat::Png,
        FormatArg::Jpeg => FrameFormat::Jpeg,
    };
    corpus.write(&a.out, format)?;
    emit(json!({
        "out": a.out,
        "fires": corpus.sequences.len(),
        "split": corpus.split.counts(),
    }));
    Ok(())
}

/// Loads a corpus directory and aligns it with the configured preparation.
fn load(cfg: &Config, root: &Path) -> Result<PreparedCorpus> {
    let (manifest, sequences, pipeline) = load_corpus_dir(root)?;
    let split = match manifest_split(&manifest) {
        Some(s) => s,
        None => {
            let ids: Vec<String> = manifest.iter().map(|e| e.fire_id.clone()).collect();
            make_splits(&ids, &SplitRequest::Fractions(cfg.data.split_fractions), cfg.data.split_seed)?
        }
    };
    build_corpus(&sequences, &split, pipeline.as_ref(), &cfg.prep, cfg.data.max_missing_fraction)
}

fn prepare(cfg: &Config, a: &PrepareArgs) -> Result<()> {
    let corpus = load(cfg, &a.data)?;
    if let (Some(path), Some(stats)) = (&a.stats_out, &corpus.weather_stats) {
        let text = serde_json::to_string_pretty(stats)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    emit(json!({
        "fires": corpus.split.counts(),
        "samples": [corpus.train.len(), corpus.val.len(), corpus.test.len()],
        "weather": corpus.weather_stats.is_some(),
        "weather_stats": corpus.weather_stats,
    }));
    Ok(())
}

fn train(mut cfg: Config, a: &TrainArgs) -> Result<()> {
    let stage_cfg = match (a.stage, &a.init) {
        (StageArg::Vanilla, None) => &mut cfg.stage_one,
        _ => &mut cfg.stage_two,
    };
    if let Some(s) = a.seed {
        stage_cfg.optimizer.seed = s;
    }
    if let Some(e) = a.epochs {
        stage_cfg.optimizer.max_epochs = e;
    }
    let corpus = load(&cfg, &a.data)?;
    let dir = RunDir::create(&a.out)?;
    std::fs::write(dir.path("config.toml"), cfg.to_toml()?).map_err(|e| Error::io(dir.path("config.toml"), e))?;
    let init = a.init.as_deref().map(Checkpoint::load).transpose()?;
    let outcome = match (a.stage, init) {
        (StageArg::Vanilla, None) => train_vanilla(&corpus, &cfg.model, &cfg.stage_one, Some(&dir))?,
        (StageArg::Vanilla, Some(v)) => continue_vanilla(&corpus, &v, &cfg.stage_two, Some(&dir))?,
        (StageArg::Multimodal, Some(v)) => {
            let arm = match a.weather {
                WeatherArg::Real => WeatherArm::Real,
                WeatherArg::Random => WeatherArm::Random,
            };
            run_control_arm(&corpus, &v, &cfg.model, arm, &cfg.stage_two, Some(&dir))?
        }
        (StageArg::Multimodal, None) => {
            return Err(Error::Config("the multimodal stage needs --init <vanilla checkpoint>".into()))
        }
    };
    emit(json!({
        "checkpoint": dir.best_checkpoint(),
        "best_epoch": outcome.state.best_epoch,
        "best_val_loss": outcome.state.best_val_loss,
        "epochs_run": outcome.state.epoch,
    }));
    Ok(())
}

fn evaluate(cfg: &Config, a: &EvaluateArgs) -> Result<()> {
    let split: Split = a.split.parse()?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let arm = match (ckpt.stage, a.weather) {
        (TrainingStage::Vanilla, _) => Arm::Baseline,
        (TrainingStage::Multimodal, WeatherArg::Real) => Arm::RealWeather,
        (TrainingStage::Multimodal, WeatherArg::Random) => Arm::RandomWeather,
    };
    let source = arm.source(a.seed);
    let corpus = load(cfg, &a.data)?;
    let model = ckpt.to_model()?;
    let (log, loss) = predict(&model, corpus.samples(split), source, &cfg.stage_two.loss)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    log.write_csv(&a.out.join("predictions.csv"))?;
    let run = evaluate_log(&log, arm.as_str(), a.seed, cfg.suite.threshold, cfg.suite.horizon)?;
    write_runs(&a.out.join("metrics.csv"), &[aggregate_runs(std::slice::from_ref(&run))?])?;
    emit(json!({ "split": split.as_str(), "loss": loss, "metrics": run }));
    Ok(())
}

fn suite(mut cfg: Config, a: &SuiteArgs) -> Result<()> {
    if let Some(seeds) = &a.seeds {
        cfg.suite.seeds = seeds.clone();
    }
    let corpus = match &a.data {
        Some(root) => load(&cfg, root)?,
        None => {
            if cfg.synthetic.tiling != cfg.prep.tiling {
                return Err(Error::Config("synthetic.tiling must equal prep.tiling to train on a generated corpus".into()));
            }
            generate_synthetic_dataset(&cfg.synthetic)?.prepare_with(&cfg.prep, cfg.data.max_missing_fraction)?
        }
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    std::fs::write(a.out.join("config.toml"), cfg.to_toml()?).map_err(|e| Error::io(&a.out, e))?;
    let result = run_experiment_suite(&corpus, &cfg.suite_config(), Some(&a.out))?;
    print!("{}", format_table(&result.reports));
    Ok(())
}

fn report(cfg: &Config, a: &ReportArgs) -> Result<()> {
    let runs = read_prediction_logs(&a.logs)?;
    let reports = summarize(&runs, cfg.suite.threshold, cfg.suite.horizon)?;
    write_outputs(&a.out, &reports, &runs, cfg.suite.horizon, cfg.suite.threshold)?;
    print!("{}", format_table(&reports));
    Ok(())
}
