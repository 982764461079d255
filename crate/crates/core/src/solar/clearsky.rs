use super::{IrradianceSample, SolarConfig, SunPosition, SOLAR_CONSTANT};

/// Receiver plane orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    pub cos_slope: f64,
    /// Unit normal (east, north, up).
    pub normal: [f64; 3],
}

impl Orientation {
    pub const HORIZONTAL: Orientation = Orientation {
        cos_slope: 1.0,
        normal: [0.0, 0.0, 1.0],
    };

    /// `slope` in degrees from horizontal; `aspect` is the downslope
    /// direction in degrees clockwise from north.
    pub fn from_slope_aspect(slope: f64, aspect: f64) -> Self {
        let (sb, cb) = slope.to_radians().sin_cos();
        let (sa, ca) = aspect.to_radians().sin_cos();
        Orientation {
            cos_slope: cb,
            normal: [sb * sa, sb * ca, cb],
        }
    }
}

/// Horizontal clear-sky quantities for one sun position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearSky {
    /// Unit vector toward the sun (east, north, up).
    pub sun_dir: [f64; 3],
    pub beam_normal: f64,
    pub diffuse_horizontal: f64,
    pub global_horizontal: f64,
}

/// Kasten-Young relative optical air mass.
fn air_mass(altitude_deg: f64) -> f64 {
    1.0 / (altitude_deg.to_radians().sin() + 0.50572 * (altitude_deg + 6.07995).powf(-1.6364))
}

/// Rayleigh optical thickness at air mass `m`.
fn rayleigh_depth(m: f64) -> f64 {
    if m <= 20.0 {
        1.0 / (6.6296 + 1.7513 * m - 0.1202 * m * m + 0.0065 * m.powi(3) - 0.00013 * m.powi(4))
    } else {
        1.0 / (10.4 + 0.718 * m)
    }
}

fn eccentricity(day_of_year: u16) -> f64 {
    1.0 + 0.033 * (std::f64::consts::TAU * day_of_year as f64 / 365.0).cos()
}

impl ClearSky {
    /// `None` when the sun is at or below the horizon.
    pub fn new(sun: &SunPosition, cfg: &SolarConfig) -> Option<Self> {
        if sun.altitude <= 0.0 {
            return None;
        }
        let tl = cfg.linke_turbidity;
        let g0 = SOLAR_CONSTANT * eccentricity(cfg.day_of_year);
        let m = air_mass(sun.altitude);
        let beam_normal = g0 * (-0.8662 * tl * m * rayleigh_depth(m)).exp();

        let (sin_h, cos_h) = sun.altitude.to_radians().sin_cos();
        let (sin_a, cos_a) = sun.azimuth.to_radians().sin_cos();

        // diffuse transmission at zenith and the solar-altitude function
        let tn = -0.015843 + 0.030543 * tl + 0.0003797 * tl * tl;
        let a1p = 0.26463 - 0.061581 * tl + 0.0031408 * tl * tl;
        let a1 = if a1p * tn < 0.0022 { 0.0022 / tn } else { a1p };
        let a2 = 2.04020 + 0.018945 * tl - 0.011161 * tl * tl;
        let a3 = -1.3025 + 0.039231 * tl + 0.0085079 * tl * tl;
        let fd = a1 + a2 * sin_h + a3 * sin_h * sin_h;
        let diffuse_horizontal = (g0 * tn * fd).max(0.0);

        Some(ClearSky {
            sun_dir: [cos_h * sin_a, cos_h * cos_a, sin_h],
            beam_normal,
            diffuse_horizontal,
            global_horizontal: beam_normal * sin_h + diffuse_horizontal,
        })
    }

    /// Unshadowed beam on the receiver, clipped at zero.
    #[inline]
    pub fn beam_on(&self, o: &Orientation) -> f64 {
        let n = &o.normal;
        let s = &self.sun_dir;
        (self.beam_normal * (n[0] * s[0] + n[1] * s[1] + n[2] * s[2])).max(0.0)
    }

    /// Isotropic sky diffuse plus ground-reflected irradiance; unaffected by
    /// shading.
    #[inline]
    pub fn diffuse_reflected_on(&self, o: &Orientation, albedo: f64) -> (f64, f64) {
        (
            self.diffuse_horizontal * (1.0 + o.cos_slope) * 0.5,
            albedo * self.global_horizontal * (1.0 - o.cos_slope) * 0.5,
        )
    }

    pub fn on_surface(&self, o: &Orientation, albedo: f64, shadowed: bool) -> IrradianceSample {
        let (diffuse, reflected) = self.diffuse_reflected_on(o, albedo);
        IrradianceSample {
            beam: if shadowed { 0.0 } else { self.beam_on(o) },
            diffuse,
            reflected,
        }
    }
}

pub fn clearsky_components(
    sun: &SunPosition,
    cfg: &SolarConfig,
    slope: f64,
    aspect: f64,
    shadowed: bool,
) -> IrradianceSample {
    match ClearSky::new(sun, cfg) {
        None => IrradianceSample::default(),
        Some(sky) => sky.on_surface(&Orientation::from_slope_aspect(slope, aspect), cfg.albedo, shadowed),
    }
}
