use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    aggregate_stations, interpolate_series, normalize_weather, select_stations, CameraPose, NormStats,
    StationRegistry, WeatherSeries, WeatherVector, WindConvention, FUSED_ATTRIBUTES,
};
use crate::error::{Error, Result};

/// Read-only station series keyed by station id.
#[derive(Debug, Clone, Default)]
pub struct WeatherStore {
    series: BTreeMap<String, WeatherSeries>,
}

impl WeatherStore {
    pub fn new(series: impl IntoIterator<Item = WeatherSeries>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for s in series {
            let id = s.station_id.clone();
            if map.insert(id.clone(), s).is_some() {
                return Err(Error::Weather(format!("duplicate series for station {id}")));
            }
        }
        Ok(Self { series: map })
    }

    pub fn get(&self, station_id: &str) -> Option<&WeatherSeries> {
        self.series.get(station_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &WeatherSeries> {
        self.series.values()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

/// Station selection, interpolation and aggregation for frame timestamps.
#[derive(Debug, Clone)]
pub struct WeatherPipeline {
    pub registry: StationRegistry,
    pub store: WeatherStore,
    pub stations_per_camera: usize,
    pub convention: WindConvention,
}

impl WeatherPipeline {
    pub fn new(registry: StationRegistry, store: WeatherStore) -> Self {
        Self {
            registry,
            store,
            stations_per_camera: 3,
            convention: WindConvention::default(),
        }
    }

    /// Unnormalized vector for `camera` at `t`.
    pub fn raw_vector(&self, camera: &CameraPose, t: DateTime<Utc>) -> Result<WeatherVector> {
        let selection = select_stations(camera, &self.registry, self.stations_per_camera)?;
        if selection.fallback {
            log::debug!("camera {}: station selection fell back to nearest overall", camera.camera_id);
        }
        let mut per_station = Vec::with_capacity(selection.station_ids.len());
        for id in &selection.station_ids {
            let series = self
                .store
                .get(id)
                .ok_or_else(|| Error::Weather(format!("no series loaded for station {id} (camera {})", camera.camera_id)))?;
            let values = interpolate_series(series, &FUSED_ATTRIBUTES, t)?;
            per_station.push(
                FUSED_ATTRIBUTES
                    .iter()
                    .map(|a| a.to_string())
                    .zip(values)
                    .collect::<BTreeMap<_, _>>(),
            );
        }
        let agg = aggregate_stations(&per_station)?;
        WeatherVector::from_attributes(&agg, t, self.convention)
    }

    /// Normalized vector for `camera` at `t`.
    pub fn build(&self, camera: &CameraPose, t: DateTime<Utc>, stats: &NormStats) -> Result<WeatherVector> {
        normalize_weather(&self.raw_vector(camera, t)?, stats)
    }
}

/// Eight standard-normal draws, flagged as normalized.
pub fn random_weather_vector(seed: u64, t: DateTime<Utc>) -> WeatherVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = [0.0; 8];
    for v in &mut values {
        *v = StandardNormal.sample(&mut rng);
    }
    WeatherVector {
        values,
        timestamp: t,
        normalized: true,
    }
}
