//! Mesonet-style timeseries client.
//!
//! `Replay` reads CSV fixtures from disk. `Live` issues HTTP requests against a
//! Synoptic-compatible endpoint; it is compiled only with the `live` feature.

use std::collections::HashMap;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde_json::Value;

use super::{fixture, RawWeatherRecord, StationRegistry, TimeWindow, WeatherSeries, WeatherStation, ATTRIBUTE_SCHEMA, NOMINAL_CADENCE_SECS};
use crate::error::{Error, Result};

pub const DEFAULT_BASE_URL: &str = "https://api.synopticdata.com/v2";
pub const DEFAULT_TOKEN_ENV: &str = "SYNOPTIC_TOKEN";

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMode {
    Replay { dir: PathBuf },
    Live { base_url: String, token_env: String },
}

#[derive(Debug, Clone)]
pub struct MesonetClient {
    mode: ClientMode,
}

impl MesonetClient {
    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: ClientMode::Replay { dir: dir.into() },
        }
    }

    pub fn live(base_url: impl Into<String>, token_env: impl Into<String>) -> Self {
        Self {
            mode: ClientMode::Live {
                base_url: base_url.into(),
                token_env: token_env.into(),
            },
        }
    }

    pub fn mode(&self) -> &ClientMode {
        &self.mode
    }

    /// Station registry. Live mode derives it from a timeseries response.
    pub fn stations(&self) -> Result<StationRegistry> {
        match &self.mode {
            ClientMode::Replay { dir } => fixture::read_registry(&dir.join(fixture::REGISTRY_FILE)),
            ClientMode::Live { .. } => Err(Error::Weather(
                "live station metadata comes with timeseries responses".into(),
            )),
        }
    }

    /// Records of each station inside `window`.
    pub fn timeseries(&self, station_ids: &[String], window: TimeWindow) -> Result<Vec<WeatherSeries>> {
        match &self.mode {
            ClientMode::Replay { dir } => station_ids
                .iter()
                .map(|id| {
                    let mut s = fixture::read_series(&fixture::series_path(dir, id), id)?;
                    s.records.retain(|r| window.contains(r.timestamp));
                    Ok(s)
                })
                .collect(),
            ClientMode::Live { base_url, token_env } => {
                let token = std::env::var(token_env)
                    .map_err(|_| Error::Weather(format!("environment variable {token_env} is not set")))?;
                let url = timeseries_url(base_url, station_ids, window, &token);
                let body = http_get(&url)?;
                Ok(parse_synoptic_timeseries(&body)?.into_iter().map(|(_, s)| s).collect())
            }
        }
    }
}

pub fn timeseries_url(base_url: &str, station_ids: &[String], window: TimeWindow, token: &str) -> String {
    let fmt = |t: DateTime<Utc>| t.format("%Y%m%d%H%M").to_string();
    format!(
        "{}/stations/timeseries?stid={}&start={}&end={}&obtimezone=utc&token={}",
        base_url.trim_end_matches('/'),
        station_ids.join(","),
        fmt(window.start),
        fmt(window.end),
        token
    )
}

#[cfg(feature = "live")]
fn http_get(url: &str) -> Result<String> {
    let mut resp = ureq::get(url)
        .call()
        .map_err(|e| Error::Weather(format!("request failed: {e}")))?;
    resp.body_mut()
        .read_to_string()
        .map_err(|e| Error::Weather(format!("reading response: {e}")))
}

#[cfg(not(feature = "live"))]
fn http_get(_url: &str) -> Result<String> {
    Err(Error::Weather("live mode requires building with the `live` feature".into()))
}

fn canonical_attribute(key: &str) -> Option<&'static str> {
    let base = key.split("_set_").next().unwrap_or(key);
    let name = match base {
        "air_temp" => "air_temperature",
        "dew_point_temperature" => "dew_point",
        "precip_accum_24_hour" => "precip_accum_24_hour",
        other => other,
    };
    ATTRIBUTE_SCHEMA.iter().copied().find(|a| *a == name)
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

/// Parses a Synoptic `stations/timeseries` JSON body into station metadata
/// and series on the full attribute schema.
pub fn parse_synoptic_timeseries(body: &str) -> Result<Vec<(WeatherStation, WeatherSeries)>> {
    let root: Value = serde_json::from_str(body)?;
    if let Some(code) = root.pointer("/SUMMARY/RESPONSE_CODE").and_then(Value::as_i64) {
        if code != 1 {
            let msg = root
                .pointer("/SUMMARY/RESPONSE_MESSAGE")
                .and_then(Value::as_str)
                .unwrap_or("unknown error");
            return Err(Error::Weather(format!("API error {code}: {msg}")));
        }
    }
    let stations = root
        .get("STATION")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Weather("response has no STATION array".into()))?;
    let schema: Vec<String> = ATTRIBUTE_SCHEMA.iter().map(|s| s.to_string()).collect();

    stations
        .iter()
        .map(|st| {
            let id = st
                .get("STID")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Weather("station without STID".into()))?
                .to_string();
            let coord = |k: &str| {
                st.get(k)
                    .and_then(number)
                    .ok_or_else(|| Error::Weather(format!("station {id} lacks {k}")))
            };
            let station = WeatherStation {
                station_id: id.clone(),
                latitude: coord("LATITUDE")?,
                longitude: coord("LONGITUDE")?,
                elevation: st.get("ELEVATION").and_then(number),
                network: st
                    .get("MNET_SHORTNAME")
                    .or_else(|| st.get("MNET_ID"))
                    .map(|v| v.as_str().map(String::from).unwrap_or_else(|| v.to_string()))
                    .unwrap_or_default(),
            };
            let obs = st
                .get("OBSERVATIONS")
                .and_then(Value::as_object)
                .ok_or_else(|| Error::Weather(format!("station {id} has no OBSERVATIONS")))?;
            let times = obs
                .get("date_time")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Weather(format!("station {id} has no date_time")))?;
            let mut columns: HashMap<&str, &Vec<Value>> = HashMap::new();
            for (k, v) in obs {
                if let (Some(name), Some(arr)) = (canonical_attribute(k), v.as_array()) {
                    columns.entry(name).or_insert(arr);
                }
            }
            let records = times
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let ts = t
                        .as_str()
                        .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
                        .ok_or_else(|| Error::Weather(format!("station {id}: bad timestamp {t}")))?
                        .with_timezone(&Utc);
                    let values = ATTRIBUTE_SCHEMA
                        .iter()
                        .map(|a| columns.get(a).and_then(|c| c.get(i)).and_then(number))
                        .collect();
                    Ok(RawWeatherRecord {
                        station_id: id.clone(),
                        timestamp: ts,
                        values,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let series = WeatherSeries::new(id, schema.clone(), records, NOMINAL_CADENCE_SECS)?;
            Ok((station, series))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    const BODY: &str = r#"{
      "SUMMARY": {"RESPONSE_CODE": 1, "RESPONSE_MESSAGE": "OK"},
      "STATION": [{
        "STID": "HWR05", "LATITUDE": "32.95", "LONGITUDE": "-116.77", "ELEVATION": "1210",
        "MNET_SHORTNAME": "HPWREN",
        "OBSERVATIONS": {
          "date_time": ["2020-07-01T10:00:00Z", "2020-07-01T10:10:00Z"],
          "air_temp_set_1": [24.1, 24.6],
          "relative_humidity_set_1": [31.0, null],
          "dew_point_temperature_set_1d": [6.0, 6.2],
          "wind_direction_set_1": [250, 260]
        }
      }]
    }"#;

    #[test]
    fn parses_synoptic_body() {
        let parsed = parse_synoptic_timeseries(BODY).unwrap();
        assert_eq!(parsed.len(), 1);
        let (st, s) = &parsed[0];
        assert_eq!(st.station_id, "HWR05");
        assert_eq!(st.network, "HPWREN");
        assert_eq!(s.records.len(), 2);
        let r = &s.records[1];
        assert_eq!(r.values[s.attribute_index("air_temperature").unwrap()], Some(24.6));
        assert_eq!(r.values[s.attribute_index("relative_humidity").unwrap()], None);
        assert_eq!(r.values[s.attribute_index("dew_point").unwrap()], Some(6.2));
        assert_eq!(r.values[s.attribute_index("wind_gust").unwrap()], None);
    }

    #[test]
    fn api_error_is_surfaced() {
        let body = r#"{"SUMMARY": {"RESPONSE_CODE": 2, "RESPONSE_MESSAGE": "bad token"}}"#;
        assert!(parse_synoptic_timeseries(body).unwrap_err().to_string().contains("bad token"));
    }

    #[test]
    fn url_has_window_and_stations() {
        let w = TimeWindow::new(
            Utc.with_ymd_and_hms(2020, 7, 1, 10, 0, 0).unwrap(),
            Utc.with_ymd_and_hms(2020, 7, 1, 11, 30, 0).unwrap(),
        )
        .unwrap();
        let url = timeseries_url("https://x/v2/", &["A".into(), "B".into()], w, "tok");
        assert_eq!(
            url,
            "https://x/v2/stations/timeseries?stid=A,B&start=202007011000&end=202007011130&obtimezone=utc&token=tok"
        );
    }

    #[test]
    fn live_without_token_fails_cleanly() {
        let c = MesonetClient::live(DEFAULT_BASE_URL, "SMOKEYNET_TEST_UNSET_TOKEN");
        let w = TimeWindow::new(Utc::now(), Utc::now()).unwrap();
        assert!(c.timeseries(&["A".into()], w).is_err());
    }
}
