use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{WeatherVector, VECTOR_COMPONENTS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub mean: f64,
    pub sd: f64,
}

/// Per-component z-score statistics keyed by component name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NormStats {
    pub components: BTreeMap<String, ComponentStats>,
}

impl NormStats {
    /// Population mean and SD of each component over raw vectors.
    pub fn fit<'a>(vectors: impl IntoIterator<Item = &'a WeatherVector>) -> Result<Self> {
        let vs: Vec<&WeatherVector> = vectors.into_iter().collect();
        if vs.is_empty() {
            return Err(Error::Weather("cannot fit statistics on zero vectors".into()));
        }
        if vs.iter().any(|v| v.normalized) {
            return Err(Error::Weather("statistics must be fitted on raw vectors".into()));
        }
        let n = vs.len() as f64;
        let components = VECTOR_COMPONENTS
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let mean = vs.iter().map(|v| v.values[i]).sum::<f64>() / n;
                let var = vs.iter().map(|v| (v.values[i] - mean).powi(2)).sum::<f64>() / n;
                (name.to_string(), ComponentStats { mean, sd: var.sqrt() })
            })
            .collect();
        Ok(Self { components })
    }

    fn ordered(&self) -> Result<[ComponentStats; 8]> {
        let mut out = [ComponentStats { mean: 0.0, sd: 1.0 }; 8];
        for (i, name) in VECTOR_COMPONENTS.iter().enumerate() {
            out[i] = *self
                .components
                .get(*name)
                .ok_or_else(|| Error::Weather(format!("normalization stats lack {name}")))?;
        }
        Ok(out)
    }
}

/// z-score each component. Components with zero SD map to 0.
pub fn normalize_weather(v: &WeatherVector, stats: &NormStats) -> Result<WeatherVector> {
    if v.normalized {
        return Err(Error::Weather("vector is already normalized".into()));
    }
    let st = stats.ordered()?;
    let mut values = [0.0; 8];
    for i in 0..8 {
        values[i] = if st[i].sd > 0.0 {
            (v.values[i] - st[i].mean) / st[i].sd
        } else {
            0.0
        };
    }
    Ok(WeatherVector {
        values,
        timestamp: v.timestamp,
        normalized: true,
    })
}

/// Inverse of [`normalize_weather`].
pub fn denormalize_weather(v: &WeatherVector, stats: &NormStats) -> Result<WeatherVector> {
    if !v.normalized {
        return Err(Error::Weather("vector is not normalized".into()));
    }
    let st = stats.ordered()?;
    let mut values = [0.0; 8];
    for i in 0..8 {
        values[i] = st[i].mean + v.values[i] * st[i].sd;
    }
    Ok(WeatherVector {
        values,
        timestamp: v.timestamp,
        normalized: false,
    })
}
