use std::collections::BTreeMap;

use super::geo::wrap_degrees;
use crate::error::{Error, Result};

const DIRECTION: &str = "wind_direction";

/// Circular mean of headings in degrees, in `[0, 360)`.
pub fn circular_mean_deg(angles: &[f64]) -> f64 {
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| {
        let r = a.to_radians();
        (s + r.sin(), c + r.cos())
    });
    let mean = wrap_degrees(s.atan2(c).to_degrees());
    // snap rounding noise around north
    if (360.0 - mean) < 1e-9 {
        0.0
    } else {
        mean
    }
}

/// Element-wise mean over stations; `wind_direction` uses the circular mean.
pub fn aggregate_stations(stations: &[BTreeMap<String, f64>]) -> Result<BTreeMap<String, f64>> {
    let Some(first) = stations.first() else {
        return Err(Error::Weather("no station values to aggregate".into()));
    };
    if stations
        .iter()
        .any(|s| s.len() != first.len() || !s.keys().all(|k| first.contains_key(k)))
    {
        return Err(Error::Weather("stations report inconsistent attribute sets".into()));
    }
    let n = stations.len() as f64;
    Ok(first
        .keys()
        .map(|k| {
            let v = if k == DIRECTION {
                let dirs: Vec<f64> = stations.iter().map(|s| s[k]).collect();
                circular_mean_deg(&dirs)
            } else {
                stations.iter().map(|s| s[k]).sum::<f64>() / n
            };
            (k.clone(), v)
        })
        .collect())
}
