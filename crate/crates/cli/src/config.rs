//! Declarative run configuration: defaults, a TOML file, then `--set`
//! overrides, each layer merged key by key.

use std::path::Path;

use serde::{Deserialize, Serialize};
use smokeynet::dataset::synthetic::SyntheticSpec;
use smokeynet::dataset::{FramePrep, DEFAULT_MAX_MISSING, REFERENCE_FRACTIONS};
use smokeynet::eval::{SuiteConfig, DEFAULT_HORIZON, DEFAULT_THRESHOLD};
use smokeynet::model::ModelConfig;
use smokeynet::train::TrainConfig;
use smokeynet::{Error, Result};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Used when the manifest carries no split column.
    pub split_fractions: [f64; 3],
    pub split_seed: u64,
    pub max_missing_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            split_fractions: REFERENCE_FRACTIONS,
            split_seed: 0,
            max_missing_fraction: DEFAULT_MAX_MISSING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSection {
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub horizon: i32,
}

impl Default for SuiteSection {
    fn default() -> Self {
        Self {
            seeds: (0..8).collect(),
            threshold: DEFAULT_THRESHOLD,
            horizon: DEFAULT_HORIZON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub synthetic: SyntheticSpec,
    pub data: DataConfig,
    pub prep: FramePrep,
    pub model: ModelConfig,
    pub stage_one: TrainConfig,
    pub stage_two: TrainConfig,
    pub suite: SuiteSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            synthetic: SyntheticSpec::default(),
            data: DataConfig::default(),
            prep: FramePrep::default(),
            model: ModelConfig::default(),
            stage_one: TrainConfig {
                early_stopping: false,
                ..TrainConfig::default()
            },
            stage_two: TrainConfig::default(),
            suite: SuiteSection::default(),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Dotted keys present in `doc` but absent from `known`.
fn unknown_keys(doc: &Table, known: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in doc {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (known.get(k), v) {
            (None, _) => out.push(path),
            (Some(Value::Table(kt)), Value::Table(dt)) => unknown_keys(dt, kt, &path, out),
            _ => {}
        }
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, else as a string.
fn parse_override(spec: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| cfg_err(format!("override {spec:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(cfg_err(format!("override key {key:?} is malformed")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((path, value))
}

fn set_path(doc: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut t = doc;
    for p in parents {
        t = match t.entry(p.clone()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(inner) => inner,
            _ => return Err(cfg_err(format!("{} is not a section", path.join(".")))),
        };
    }
    t.insert(last.clone(), value);
    Ok(())
}

impl Config {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<Table>().map_err(|e| Error::parse(p, e.to_string()))?
            }
            None => Table::new(),
        };
        for o in overrides {
            let (path, value) = parse_override(o)?;
            set_path(&mut doc, &path, value)?;
        }
        let defaults = Table::try_from(Config::default()).map_err(|e| cfg_err(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&doc, &defaults, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(cfg_err(format!("unknown configuration keys: {}", unknown.join(", "))));
        }
        let mut merged = defaults;
        merge(&mut merged, doc);
        let cfg: Config = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.stage_one.validate()?;
        self.stage_two.validate()?;
        self.prep.tiling.validate()?;
        let t = &self.prep.tiling;
        if (t.tile_size, t.rows, t.cols) != (self.model.tile_size, self.model.grid_rows, self.model.grid_cols) {
            return Err(cfg_err(format!(
                "prep tiling {}px {}x{} does not match model {}px {}x{}",
                t.tile_size, t.rows, t.cols, self.model.tile_size, self.model.grid_rows, self.model.grid_cols
            )));
        }
        Ok(())
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            model: self.model.clone(),
            stage_one: self.stage_one.clone(),
            stage_two: self.stage_two.clone(),
            seeds: self.suite.seeds.clone(),
            threshold: self.suite.threshold,
            horizon: self.suite.horizon,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| cfg_err(e.to_string()))
    }
}
