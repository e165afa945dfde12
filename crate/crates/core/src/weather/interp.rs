use chrono::{DateTime, Utc};

use super::WeatherSeries;
use crate::error::{Error, Result};

/// Two-point linear interpolation on timestamps.
pub fn lerp(t0: DateTime<Utc>, v0: f64, t1: DateTime<Utc>, v1: f64, t: DateTime<Utc>) -> f64 {
    let span = (t1 - t0).num_milliseconds() as f64;
    if span == 0.0 {
        return v0;
    }
    let frac = (t - t0).num_milliseconds() as f64 / span;
    v0 + frac * (v1 - v0)
}

/// Values of `attributes` at `t`, linearly interpolated between the two
/// bracketing records. Exact at record timestamps; no extrapolation.
pub fn interpolate_series(series: &WeatherSeries, attributes: &[&str], t: DateTime<Utc>) -> Result<Vec<f64>> {
    let (first, last) = series.span().ok_or_else(|| {
        Error::Extrapolation(format!("station {} has no records", series.station_id))
    })?;
    if t < first || t > last {
        return Err(Error::Extrapolation(format!(
            "{t} outside {} span {first} .. {last}",
            series.station_id
        )));
    }
    let idx: Vec<usize> = attributes
        .iter()
        .map(|a| {
            series
                .attribute_index(a)
                .ok_or_else(|| Error::Weather(format!("{} has no attribute {a}", series.station_id)))
        })
        .collect::<Result<_>>()?;

    let recs = &series.records;
    let pos = recs.partition_point(|r| r.timestamp < t);
    let missing = |attr: &str, a: &DateTime<Utc>, b: &DateTime<Utc>| Error::MissingBracket {
        attribute: format!("{}:{attr}", series.station_id),
        start: a.to_rfc3339(),
        end: b.to_rfc3339(),
    };

    if pos < recs.len() && recs[pos].timestamp == t {
        let r = &recs[pos];
        return idx
            .iter()
            .zip(attributes)
            .map(|(&i, a)| r.values[i].ok_or_else(|| missing(a, &r.timestamp, &r.timestamp)))
            .collect();
    }
    let (lo, hi) = (&recs[pos - 1], &recs[pos]);
    idx.iter()
        .zip(attributes)
        .map(|(&i, a)| match (lo.values[i], hi.values[i]) {
            (Some(v0), Some(v1)) => Ok(lerp(lo.timestamp, v0, hi.timestamp, v1, t)),
            _ => Err(missing(a, &lo.timestamp, &hi.timestamp)),
        })
        .collect()
}
