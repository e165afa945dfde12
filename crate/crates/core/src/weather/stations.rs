use std::cmp::Ordering;

use super::geo::{angular_difference, great_circle_km, initial_bearing_deg};
use super::StationRegistry;
use crate::error::{Error, Result};
use super::CameraPose;

/// Half-width of the viewing sector when a camera has no field of view.
pub const DEFAULT_HALF_SECTOR_DEG: f64 = 90.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StationSelection {
    pub station_ids: Vec<String>,
    /// True when fewer than `k` stations were in front of the camera and
    /// the nearest others filled the remainder.
    pub fallback: bool,
}

/// The `k` nearest stations in the camera's viewing sector.
pub fn select_stations(camera: &CameraPose, registry: &StationRegistry, k: usize) -> Result<StationSelection> {
    if registry.is_empty() {
        return Err(Error::Weather("station registry is empty".into()));
    }
    if k == 0 {
        return Err(Error::Weather("k must be at least 1".into()));
    }
    let half = camera
        .field_of_view
        .map(|f| f / 2.0)
        .unwrap_or(DEFAULT_HALF_SECTOR_DEG);

    let mut ranked: Vec<(f64, bool, &str)> = registry
        .stations()
        .iter()
        .map(|s| {
            let dist = great_circle_km(camera.latitude, camera.longitude, s.latitude, s.longitude);
            let in_sector = dist == 0.0 || {
                let bearing = initial_bearing_deg(camera.latitude, camera.longitude, s.latitude, s.longitude);
                angular_difference(bearing, camera.view_azimuth) <= half
            };
            (dist, in_sector, s.station_id.as_str())
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.2.cmp(b.2))
    });

    let mut chosen: Vec<String> = ranked
        .iter()
        .filter(|r| r.1)
        .take(k)
        .map(|r| r.2.to_string())
        .collect();
    let fallback = chosen.len() < k;
    if fallback {
        for r in &ranked {
            if chosen.len() == k {
                break;
            }
            if !chosen.iter().any(|c| c == r.2) {
                chosen.push(r.2.to_string());
            }
        }
    }
    Ok(StationSelection {
        station_ids: chosen,
        fallback,
    })
}
