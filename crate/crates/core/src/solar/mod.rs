//! Clear-sky daily irradiation over an elevation raster.
//!
//! The engine follows the ESRA clear-sky family (beam attenuated by Linke
//! turbidity and Rayleigh optical depth, diffuse from the ESRA transmission
//! and angular functions, isotropic sky, albedo-weighted ground reflection)
//! and casts object/terrain shadows by marching rays over the surface.

mod clearsky;
mod daily;
mod position;
mod shadow;

pub use clearsky::{clearsky_components, ClearSky, Orientation};
pub use daily::{daily_irradiation, pixel_daily_irradiation, surface_orientation, DayPlan};
pub use position::{declination, solar_position, sun_half_day};
pub use shadow::{is_shadowed, ShadowCaster};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SOLAR_CONSTANT: f64 = 1367.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerrainMode {
    /// Every receiver is a horizontal plane.
    Horizontal,
    /// Receivers follow the local slope and aspect of the surface.
    TerrainFollowing,
}

impl std::str::FromStr for TerrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" => Ok(TerrainMode::Horizontal),
            "terrain-following" | "terrain" => Ok(TerrainMode::TerrainFollowing),
            _ => Err(Error::Config(format!(
                "terrain mode must be 'horizontal' or 'terrain-following', got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarConfig {
    /// Degrees, positive north.
    pub latitude: f64,
    pub day_of_year: u16,
    pub linke_turbidity: f64,
    pub albedo: f64,
    /// Hours.
    pub time_step: f64,
    /// Meters.
    pub shadow_max_distance: f64,
    pub terrain_mode: TerrainMode,
}

impl Default for SolarConfig {
    fn default() -> Self {
        SolarConfig {
            latitude: 35.78,
            day_of_year: 172,
            linke_turbidity: 3.0,
            albedo: 0.2,
            time_step: 0.25,
            shadow_max_distance: 1000.0,
            terrain_mode: TerrainMode::TerrainFollowing,
        }
    }
}

impl SolarConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.latitude.abs() <= 90.0) {
            return bad(format!("latitude must lie in [-90, 90], got {}", self.latitude));
        }
        if !(1..=365).contains(&self.day_of_year) {
            return bad(format!("day of year must lie in [1, 365], got {}", self.day_of_year));
        }
        if !(self.linke_turbidity > 0.0 && self.linke_turbidity.is_finite()) {
            return bad(format!("Linke turbidity must be > 0, got {}", self.linke_turbidity));
        }
        if !(0.0..=1.0).contains(&self.albedo) {
            return bad(format!("albedo must lie in [0, 1], got {}", self.albedo));
        }
        if !(self.time_step > 0.0 && self.time_step <= 24.0) {
            return bad(format!("time step must lie in (0, 24] hours, got {}", self.time_step));
        }
        if !(self.shadow_max_distance > 0.0 && self.shadow_max_distance.is_finite()) {
            return bad(format!(
                "shadow search distance must be > 0, got {}",
                self.shadow_max_distance
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunPosition {
    /// Degrees above the horizon.
    pub altitude: f64,
    /// Degrees clockwise from north, in [0, 360).
    pub azimuth: f64,
}

/// Instantaneous irradiance on a receiver, W/m².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IrradianceSample {
    pub beam: f64,
    pub diffuse: f64,
    pub reflected: f64,
}

impl IrradianceSample {
    pub fn total(&self) -> f64 {
        self.beam + self.diffuse + self.reflected
    }
}

