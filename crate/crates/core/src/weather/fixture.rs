//! Plain CSV fixtures: one series file per station plus a registry file.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use super::{RawWeatherRecord, StationRegistry, WeatherSeries, WeatherStation, WeatherStore, NOMINAL_CADENCE_SECS};
use crate::error::{Error, Result};

pub const REGISTRY_FILE: &str = "stations.csv";

pub fn series_path(dir: &Path, station_id: &str) -> PathBuf {
    dir.join(format!("{station_id}.csv"))
}

pub fn write_series(path: &Path, series: &WeatherSeries) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(series.schema.iter().cloned());
    w.write_record(&header)?;
    for r in &series.records {
        let mut row = vec![r.timestamp.to_rfc3339()];
        row.extend(r.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_series(path: &Path, station_id: &str) -> Result<WeatherSeries> {
    let mut r = crate::error::csv_reader(path)?;
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("timestamp") {
        return Err(Error::parse(path, "first column must be `timestamp`"));
    }
    let schema: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let mut records = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let ts = DateTime::parse_from_rfc3339(&row[0])
            .map_err(|e| Error::parse(path, format!("row {}: bad timestamp {:?}: {e}", line + 2, &row[0])))?
            .with_timezone(&Utc);
        let values = row
            .iter()
            .skip(1)
            .map(|cell| {
                let cell = cell.trim();
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::parse(path, format!("row {}: {cell:?}: {e}", line + 2)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(RawWeatherRecord {
            station_id: station_id.to_string(),
            timestamp: ts,
            values,
        });
    }
    WeatherSeries::new(station_id, schema, records, NOMINAL_CADENCE_SECS)
}

pub fn write_registry(path: &Path, registry: &StationRegistry) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    w.write_record(["station_id", "latitude", "longitude", "elevation", "network"])?;
    for s in registry.stations() {
        w.write_record([
            s.station_id.clone(),
            s.latitude.to_string(),
            s.longitude.to_string(),
            s.elevation.map(|e| e.to_string()).unwrap_or_default(),
            s.network.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_registry(path: &Path) -> Result<StationRegistry> {
    #[derive(serde::Deserialize)]
    struct Row {
        station_id: String,
        latitude: f64,
        longitude: f64,
        elevation: Option<f64>,
        #[serde(default)]
        network: String,
    }
    let mut r = crate::error::csv_reader(path)?;
    let stations = r
        .deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok(WeatherStation {
                station_id: row.station_id,
                latitude: row.latitude,
                longitude: row.longitude,
                elevation: row.elevation,
                network: row.network,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    StationRegistry::new(stations)
}

/// Writes the registry and every series into `dir`.
pub fn write_dir(dir: &Path, registry: &StationRegistry, store: &WeatherStore) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_registry(&dir.join(REGISTRY_FILE), registry)?;
    for s in store.iter() {
        write_series(&series_path(dir, &s.station_id), s)?;
    }
    Ok(())
}

/// Loads the registry and the series of every registered station that has a
/// file in `dir`.
pub fn read_dir(dir: &Path) -> Result<(StationRegistry, WeatherStore)> {
    let registry = read_registry(&dir.join(REGISTRY_FILE))?;
    let mut series = Vec::new();
    for s in registry.stations() {
        let p = series_path(dir, &s.station_id);
        if p.exists() {
            series.push(read_series(&p, &s.station_id)?);
        }
    }
    Ok((registry, WeatherStore::new(series)?))
}
