//! Weather-station ingest and per-frame weather vectors.
//!
//! Raw station series carry the full Mesonet attribute schema. The pipeline
//! keeps the well-populated attributes, picks the stations in front of the
//! camera, interpolates each to the frame time, averages across stations,
//! appends cartesian wind components and z-scores the result.

mod aggregate;
pub mod client;
pub mod fixture;
mod geo;
mod interp;
mod normalize;
mod pipeline;
mod stations;
mod wind;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use aggregate::{aggregate_stations, circular_mean_deg};
pub use geo::{angular_difference, great_circle_km, initial_bearing_deg};
pub use interp::{interpolate_series, lerp};
pub use normalize::{denormalize_weather, normalize_weather, ComponentStats, NormStats};
pub use pipeline::{random_weather_vector, WeatherPipeline, WeatherStore};
pub use stations::{select_stations, StationSelection};
pub use wind::{uv_to_wind, wind_to_uv, WindConvention};

/// The 23 raw attributes served for each station, in file column order.
pub const ATTRIBUTE_SCHEMA: [&str; 23] = [
    "air_temperature",
    "relative_humidity",
    "wind_speed",
    "wind_gust",
    "wind_direction",
    "dew_point",
    "altimeter",
    "pressure",
    "sea_level_pressure",
    "solar_radiation",
    "precip_accum_one_hour",
    "precip_accum_24_hour",
    "soil_temperature",
    "fuel_temperature",
    "fuel_moisture",
    "peak_wind_speed",
    "peak_wind_direction",
    "visibility",
    "heat_index",
    "wind_chill",
    "snow_depth",
    "cloud_layer_1_code",
    "weather_condition_code",
];

/// Attributes that make up the first six components of a [`WeatherVector`].
pub const FUSED_ATTRIBUTES: [&str; 6] = [
    "air_temperature",
    "relative_humidity",
    "wind_speed",
    "wind_gust",
    "wind_direction",
    "dew_point",
];

/// Component names of a [`WeatherVector`], in order.
pub const VECTOR_COMPONENTS: [&str; 8] = [
    "air_temperature",
    "relative_humidity",
    "wind_speed",
    "wind_gust",
    "wind_direction",
    "dew_point",
    "u",
    "v",
];

/// Nominal spacing of station records, in seconds.
pub const NOMINAL_CADENCE_SECS: i64 = 600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherStation {
    pub station_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub elevation: Option<f64>,
    pub network: String,
}

impl WeatherStation {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Weather(format!(
                "station {} latitude {} out of range",
                self.station_id, self.latitude
            )));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Weather(format!(
                "station {} longitude {} out of range",
                self.station_id, self.longitude
            )));
        }
        Ok(())
    }
}

/// Fixed camera location and heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub camera_id: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Degrees clockwise from north.
    pub view_azimuth: f64,
    pub field_of_view: Option<f64>,
}

impl CameraPose {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.latitude) || !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Weather(format!("camera {} position out of range", self.camera_id)));
        }
        if !(0.0..360.0).contains(&self.view_azimuth) {
            return Err(Error::Weather(format!(
                "camera {} azimuth {} outside [0, 360)",
                self.camera_id, self.view_azimuth
            )));
        }
        if let Some(f) = self.field_of_view {
            if !(f > 0.0 && f <= 360.0) {
                return Err(Error::Weather(format!(
                    "camera {} field of view {f} outside (0, 360]",
                    self.camera_id
                )));
            }
        }
        Ok(())
    }
}

/// Stations keyed by unique id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StationRegistry {
    stations: Vec<WeatherStation>,
}

impl StationRegistry {
    pub fn new(stations: Vec<WeatherStation>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for s in &stations {
            s.validate()?;
            if !seen.insert(s.station_id.clone()) {
                return Err(Error::Weather(format!("duplicate station id {}", s.station_id)));
            }
        }
        Ok(Self { stations })
    }

    pub fn stations(&self) -> &[WeatherStation] {
        &self.stations
    }

    pub fn get(&self, id: &str) -> Option<&WeatherStation> {
        self.stations.iter().find(|s| s.station_id == id)
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }
}

/// One timestamped row of a station series. `values` follows the owning
/// series' schema; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawWeatherRecord {
    pub station_id: String,
    pub timestamp: DateTime<Utc>,
    pub values: Vec<Option<f64>>,
}

/// Inclusive time range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if end < start {
            return Err(Error::Weather(format!("empty window {start} .. {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        t >= self.start && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub station_id: String,
    pub schema: Vec<String>,
    pub records: Vec<RawWeatherRecord>,
    pub cadence_secs: i64,
}

impl WeatherSeries {
    /// Validates ordering, schema width and station ids.
    pub fn new(
        station_id: impl Into<String>,
        schema: Vec<String>,
        records: Vec<RawWeatherRecord>,
        cadence_secs: i64,
    ) -> Result<Self> {
        let station_id = station_id.into();
        for (i, r) in records.iter().enumerate() {
            if r.values.len() != schema.len() {
                return Err(Error::Weather(format!(
                    "{station_id} record {i} has {} values, schema has {}",
                    r.values.len(),
                    schema.len()
                )));
            }
            if r.station_id != station_id {
                return Err(Error::Weather(format!(
                    "record {i} belongs to {} not {station_id}",
                    r.station_id
                )));
            }
            if i > 0 && r.timestamp <= records[i - 1].timestamp {
                return Err(Error::Weather(format!(
                    "{station_id} timestamps not strictly increasing at {}",
                    r.timestamp
                )));
            }
        }
        Ok(Self {
            station_id,
            schema,
            records,
            cadence_secs,
        })
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|s| s == name)
    }

    pub fn span(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        Some((self.records.first()?.timestamp, self.records.last()?.timestamp))
    }

    /// Intervals between consecutive records longer than the cadence.
    pub fn gaps(&self) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
        self.records
            .windows(2)
            .filter(|w| (w[1].timestamp - w[0].timestamp).num_seconds() > self.cadence_secs)
            .map(|w| (w[0].timestamp, w[1].timestamp))
            .collect()
    }
}

/// Attributes whose missing fraction over `window` is strictly below
/// `max_missing_fraction`, in schema order.
pub fn filter_attributes(
    series: &WeatherSeries,
    window: TimeWindow,
    max_missing_fraction: f64,
) -> Result<Vec<String>> {
    filter_attributes_pooled(std::slice::from_ref(series), window, max_missing_fraction)
}

/// [`filter_attributes`] with counts pooled over several stations sharing a
/// schema.
pub fn filter_attributes_pooled(
    series: &[WeatherSeries],
    window: TimeWindow,
    max_missing_fraction: f64,
) -> Result<Vec<String>> {
    if !(0.0..=1.0).contains(&max_missing_fraction) {
        return Err(Error::Weather(format!(
            "max_missing_fraction {max_missing_fraction} outside [0, 1]"
        )));
    }
    let Some(first) = series.first() else {
        return Err(Error::NoRecordsInWindow);
    };
    let schema = &first.schema;
    if series.iter().any(|s| &s.schema != schema) {
        return Err(Error::Weather("stations disagree on attribute schema".into()));
    }
    let mut total = 0usize;
    let mut missing = vec![0usize; schema.len()];
    for s in series {
        for r in s.records.iter().filter(|r| window.contains(r.timestamp)) {
            total += 1;
            for (m, v) in missing.iter_mut().zip(&r.values) {
                if v.is_none_or(|x| !x.is_finite()) {
                    *m += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::NoRecordsInWindow);
    }
    Ok(schema
        .iter()
        .zip(&missing)
        .filter(|(_, &m)| (m as f64 / total as f64) < max_missing_fraction)
        .map(|(n, _)| n.clone())
        .collect())
}

/// Fused per-frame weather features in [`VECTOR_COMPONENTS`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherVector {
    pub values: [f64; 8],
    pub timestamp: DateTime<Utc>,
    pub normalized: bool,
}

impl WeatherVector {
    pub fn component(&self, name: &str) -> Option<f64> {
        VECTOR_COMPONENTS
            .iter()
            .position(|c| *c == name)
            .map(|i| self.values[i])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Raw vector from aggregated attributes; u/v are derived from the
    /// aggregated speed and direction.
    pub fn from_attributes(
        attrs: &BTreeMap<String, f64>,
        timestamp: DateTime<Utc>,
        convention: WindConvention,
    ) -> Result<Self> {
        let mut values = [0.0; 8];
        for (i, name) in FUSED_ATTRIBUTES.iter().enumerate() {
            values[i] = *attrs
                .get(*name)
                .ok_or_else(|| Error::Weather(format!("aggregated values lack {name}")))?;
        }
        let (u, v) = wind_to_uv(values[2], values[4], convention)?;
        values[6] = u;
        values[7] = v;
        let out = Self {
            values,
            timestamp,
            normalized: false,
        };
        if !out.is_finite() {
            return Err(Error::Weather(format!("non-finite weather vector at {timestamp}")));
        }
        Ok(out)
    }
}
