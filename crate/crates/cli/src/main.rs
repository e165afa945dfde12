//! `smokeynet` command-line interface.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "smokeynet", version, about = "Multimodal wildfire smoke detection pipeline")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,

    /// Override a configuration value, e.g. `stage_two.optimizer.learning_rate=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// More log output; repeat for debug.
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus on disk.
    Synth(SynthArgs),
    /// Validate a corpus and report its splits and weather statistics.
    Prepare(PrepareArgs),
    /// Train one stage or arm.
    Train(TrainArgs),
    /// Predict a split with a checkpoint and score it.
    Evaluate(EvaluateArgs),
    /// Run the baseline, random-weather and real-weather arms over seeds.
    Suite(SuiteArgs),
    /// Rebuild the comparison table and plots from prediction logs.
    Report(ReportArgs),
    /// Print the effective configuration.
    Config,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub fires: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub coupling: Option<CouplingArg>,
    #[arg(long, value_enum, default_value_t = FormatArg::Png)]
    pub format: FormatArg,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Write the training-split weather statistics here.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = StageArg::Vanilla)]
    pub stage: StageArg,
    /// Weather for the multimodal stage.
    #[arg(long, value_enum, default_value_t = WeatherArg::Real)]
    pub weather: WeatherArg,
    /// Vanilla checkpoint to start from. Required for the multimodal stage;
    /// for the vanilla stage it continues training (the baseline arm).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, value_enum, default_value_t = WeatherArg::Real)]
    pub weather: WeatherArg,
    /// Training seed; keys the random-weather draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SuiteArgs {
    /// Corpus directory; omit with `--synthetic`.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,
    /// Generate the corpus from the `synthetic` configuration section.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory of `predictions_<arm>_seed<n>.csv` files.
    #[arg(long)]
    pub logs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum CouplingArg {
    None,
    Discriminative,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum FormatArg {
    Png,
    Jpeg,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageArg {
    Vanilla,
    Multimodal,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeatherArg {
    Real,
    Random,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
