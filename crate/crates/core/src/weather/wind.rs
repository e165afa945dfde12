use serde::{Deserialize, Serialize};

use super::geo::wrap_degrees;
use crate::error::{Error, Result};

/// How a wind direction angle is read when decomposing into u/v.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindConvention {
    /// Meteorological: direction the wind blows *from*, clockwise from north.
    /// `u = -s sin(theta)`, `v = -s cos(theta)`.
    #[default]
    FromDirection,
    /// Direction the wind blows *toward*. `u = s sin(theta)`, `v = s cos(theta)`.
    ToDirection,
}

/// Polar wind (speed, direction in degrees) to cartesian (u, v).
pub fn wind_to_uv(speed: f64, direction_deg: f64, convention: WindConvention) -> Result<(f64, f64)> {
    if speed.is_nan() || direction_deg.is_nan() {
        return Err(Error::Weather("wind speed/direction is NaN".into()));
    }
    if speed < 0.0 {
        return Err(Error::Weather(format!("negative wind speed {speed}")));
    }
    if !speed.is_finite() || !direction_deg.is_finite() {
        return Err(Error::Weather("wind speed/direction is not finite".into()));
    }
    let theta = direction_deg.to_radians();
    let (u, v) = (speed * theta.sin(), speed * theta.cos());
    Ok(match convention {
        WindConvention::FromDirection => (-u, -v),
        WindConvention::ToDirection => (u, v),
    })
}

/// Inverse of [`wind_to_uv`]; direction in `[0, 360)`, zero for calm.
pub fn uv_to_wind(u: f64, v: f64, convention: WindConvention) -> (f64, f64) {
    let speed = u.hypot(v);
    if speed == 0.0 {
        return (0.0, 0.0);
    }
    let (su, sv) = match convention {
        WindConvention::FromDirection => (-u, -v),
        WindConvention::ToDirection => (u, v),
    };
    (speed, wrap_degrees(su.atan2(sv).to_degrees()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FROM: WindConvention = WindConvention::FromDirection;

    #[test]
    fn calm_wind_is_zero() {
        let (u, v) = wind_to_uv(0.0, 137.0, FROM).unwrap();
        assert_eq!(u.abs(), 0.0);
        assert_eq!(v.abs(), 0.0);
    }

    #[test]
    fn westerly_and_northerly() {
        let (u, v) = wind_to_uv(10.0, 270.0, FROM).unwrap();
        assert!((u - 10.0).abs() < 1e-12 && v.abs() < 1e-12);
        let (u, v) = wind_to_uv(10.0, 0.0, FROM).unwrap();
        assert!(u.abs() < 1e-12 && (v + 10.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(wind_to_uv(-1.0, 0.0, FROM).is_err());
        assert!(wind_to_uv(f64::NAN, 0.0, FROM).is_err());
        assert!(wind_to_uv(1.0, f64::NAN, FROM).is_err());
    }

    #[test]
    fn to_direction_flips_sign() {
        let (u1, v1) = wind_to_uv(3.0, 45.0, FROM).unwrap();
        let (u2, v2) = wind_to_uv(3.0, 45.0, WindConvention::ToDirection).unwrap();
        assert_eq!((u1, v1), (-u2, -v2));
    }

    proptest! {
        #[test]
        fn magnitude_preserved(speed in 0.0f64..80.0, dir in 0.0f64..360.0) {
            let (u, v) = wind_to_uv(speed, dir, FROM).unwrap();
            prop_assert!((u.hypot(v) - speed).abs() < 1e-9);
        }

        #[test]
        fn inverse_recovers_polar(speed in 0.01f64..80.0, dir in 0.0f64..360.0) {
            let (u, v) = wind_to_uv(speed, dir, FROM).unwrap();
            let (s, d) = uv_to_wind(u, v, FROM);
            prop_assert!((s - speed).abs() < 1e-9);
            prop_assert!(super::super::angular_difference(d, dir) < 1e-7);
        }
    }
}
