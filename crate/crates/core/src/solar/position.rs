use super::{SolarConfig, SunPosition};

/// Solar declination in degrees (Cooper).
pub fn declination(day_of_year: u16) -> f64 {
    23.45 * (360.0 * (284.0 + day_of_year as f64) / 365.0).to_radians().sin()
}

/// Sun position at local solar time `solar_time_hours`. The equation of time
/// and longitude correction are not applied.
pub fn solar_position(cfg: &SolarConfig, solar_time_hours: f64) -> SunPosition {
    let lat = cfg.latitude.to_radians();
    let dec = declination(cfg.day_of_year).to_radians();
    position_at(lat, dec, 15.0 * (solar_time_hours - 12.0))
}

pub(crate) fn position_at(lat: f64, dec: f64, hour_angle_deg: f64) -> SunPosition {
    let w = hour_angle_deg.to_radians();
    let (sin_lat, cos_lat) = lat.sin_cos();
    let (sin_dec, cos_dec) = dec.sin_cos();
    let (sin_w, cos_w) = w.sin_cos();
    let sin_alt = (sin_lat * sin_dec + cos_lat * cos_dec * cos_w).clamp(-1.0, 1.0);
    // horizontal components of the unit vector toward the sun
    let east = -cos_dec * sin_w;
    let north = sin_dec * cos_lat - cos_dec * sin_lat * cos_w;
    let mut azimuth = east.atan2(north).to_degrees();
    if azimuth < 0.0 {
        azimuth += 360.0;
    }
    if azimuth >= 360.0 {
        azimuth -= 360.0;
    }
    SunPosition {
        altitude: sin_alt.asin().to_degrees(),
        azimuth,
    }
}

/// Hours from solar noon to sunset (equal to noon minus sunrise), located by
/// bisection on the sign of the altitude to one-second precision. Returns 0
/// for polar night and 12 for polar day.
pub fn sun_half_day(cfg: &SolarConfig) -> f64 {
    let alt = |offset: f64| solar_position(cfg, 12.0 + offset).altitude;
    if alt(0.0) <= 0.0 {
        return 0.0;
    }
    if alt(12.0) > 0.0 {
        return 12.0;
    }
    let (mut lo, mut hi) = (0.0f64, 12.0f64);
    while hi - lo > 1.0 / 3600.0 {
        let mid = 0.5 * (lo + hi);
        if alt(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
