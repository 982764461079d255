//! Run configuration: a flat `key = value` file with `#` comments.
//!
//! Every key in [`KEYS`] can also be set programmatically through
//! [`RunConfig::set`], which is how command-line flags override file values.
//! Relative paths resolve against the directory they were given in (the
//! config file's directory for file values, the working directory for
//! flags).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::canopy::{Roi, ThresholdMode};
use crate::classify::ClassifyConfig;
use crate::error::{Error, Result};
use crate::lidar::{IngestConfig, PointFormat};
use crate::raster::GridSpec;
use crate::solar::{SolarConfig, TerrainMode};

pub struct KeyInfo {
    pub name: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, help: &'static str) -> KeyInfo {
    KeyInfo { name, help }
}

pub const KEYS: &[KeyInfo] = &[
    key("points", "LiDAR points (.las, or xyz text: x y z class return)"),
    key("points_format", "las | xyz (default: from the file extension)"),
    key("footprints", "building footprints, GeoJSON polygons (optional)"),
    key("zones", "parking lot and road polygons, GeoJSON with id and kind"),
    key("imagery", "leaf-off RGB imagery, PPM or PNG with a world file"),
    key("photos", "comma-separated upward canopy photos (PPM or PNG)"),
    key("output_dir", "directory receiving every raster, the CSV and the report"),
    key("cell_size", "grid cell size in meters (default 0.5)"),
    key("x_origin", "grid lower-left x; with y_origin, ncols, nrows fixes the grid"),
    key("y_origin", "grid lower-left y"),
    key("ncols", "grid columns"),
    key("nrows", "grid rows"),
    key("fill_radius", "void filling search radius in cells (default 8)"),
    key("z_min", "lowest plausible point elevation (default -500)"),
    key("z_max", "highest plausible point elevation (default 9000)"),
    key("dem_classes", "comma-separated ground class codes (default 2,11,17)"),
    key("noise_classes", "comma-separated noise class codes (default 7,18)"),
    key("latitude", "site latitude in degrees (default 35.78)"),
    key("leaf_on_day", "day of year for the leaf-on run (default 172)"),
    key("leaf_off_day", "day of year for the leaf-off runs (default 1)"),
    key("linke_turbidity", "Linke turbidity (default 3.0)"),
    key("albedo", "ground albedo (default 0.2)"),
    key("time_step", "integration step in hours (default 0.25)"),
    key("shadow_max_distance", "shadow search distance in meters (default 1000)"),
    key("terrain_mode", "horizontal | terrain-following (default terrain-following)"),
    key("tree_height_threshold", "minimum tree height above building_DEM in meters (default 2.5)"),
    key("evergreen_threshold", "Channel% above which a tree is evergreen (default 0.375)"),
    key("roi_center_x", "canopy photo ROI center, fraction of width (default 0.5)"),
    key("roi_center_y", "canopy photo ROI center, fraction of height (default 0.5)"),
    key("roi_radius", "canopy photo ROI radius, fraction of min(width, height) (default 0.45)"),
    key("canopy_threshold", "otsu | fixed luminance 0-255 (default otsu)"),
    key("v_override", "all-day shade value for the leaf-on composite"),
    key("f_override", "light penetration factor in [0, 1]; skips the photos"),
    key("evergreen_shade_override", "value beneath evergreen crowns in the leaf-off composite"),
    key("threads", "worker threads, 0 = all cores (default 0)"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub points: Option<PathBuf>,
    pub points_format: Option<PointFormat>,
    pub footprints: Option<PathBuf>,
    pub zones: Option<PathBuf>,
    pub imagery: Option<PathBuf>,
    pub photos: Vec<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub ingest: IngestConfig,
    /// Explicit grid; all four or none.
    pub x_origin: Option<f64>,
    pub y_origin: Option<f64>,
    pub ncols: Option<usize>,
    pub nrows: Option<usize>,
    pub fill_radius: usize,
    /// Shared solar parameters; the day is set per run.
    pub solar: SolarConfig,
    pub leaf_on_day: u16,
    pub leaf_off_day: u16,
    pub classify: ClassifyConfig,
    pub roi: Roi,
    pub canopy_threshold: ThresholdMode,
    pub v_override: Option<f64>,
    pub f_override: Option<f64>,
    pub evergreen_shade_override: Option<f64>,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            points: None,
            points_format: None,
            footprints: None,
            zones: None,
            imagery: None,
            photos: Vec::new(),
            output_dir: None,
            ingest: IngestConfig::default(),
            x_origin: None,
            y_origin: None,
            ncols: None,
            nrows: None,
            fill_radius: 8,
            solar: SolarConfig::default(),
            leaf_on_day: 172,
            leaf_off_day: 1,
            classify: ClassifyConfig::default(),
            roi: Roi::default(),
            canopy_threshold: ThresholdMode::Otsu,
            v_override: None,
            f_override: None,
            evergreen_shade_override: None,
            threads: 0,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn float(key: &str, value: &str) -> Result<f64> {
    let v: f64 = num(key, value)?;
    if !v.is_finite() {
        return Err(Error::Config(format!("{key}: value must be finite, got '{value}'")));
    }
    Ok(v)
}

fn classes(key: &str, value: &str) -> Result<BTreeSet<u8>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, base)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            self.set(k.trim(), v.trim(), base)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_config(e))))?;
        }
        Ok(())
    }

    /// Sets one key. An empty value clears optional keys.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || (!value.is_empty()).then(|| resolve(base, value));
        let opt_f = |k: &str| -> Result<Option<f64>> {
            if value.is_empty() {
                Ok(None)
            } else {
                float(k, value).map(Some)
            }
        };
        let opt_n = |k: &str| -> Result<Option<usize>> {
            if value.is_empty() {
                Ok(None)
            } else {
                num(k, value).map(Some)
            }
        };
        match key {
            "points" => self.points = path(),
            "points_format" => {
                self.points_format = match value.to_ascii_lowercase().as_str() {
                    "" => None,
                    "las" => Some(PointFormat::Las),
                    "xyz" | "xyz-text" | "txt" => Some(PointFormat::XyzText),
                    _ => return Err(Error::Config(format!("points_format must be las or xyz, got '{value}'"))),
                }
            }
            "footprints" => self.footprints = path(),
            "zones" => self.zones = path(),
            "imagery" => self.imagery = path(),
            "photos" => {
                self.photos = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| resolve(base, s))
                    .collect()
            }
            "output_dir" => self.output_dir = path(),
            "cell_size" => self.ingest.cell_size = float(key, value)?,
            "x_origin" => self.x_origin = opt_f(key)?,
            "y_origin" => self.y_origin = opt_f(key)?,
            "ncols" => self.ncols = opt_n(key)?,
            "nrows" => self.nrows = opt_n(key)?,
            "fill_radius" => self.fill_radius = num(key, value)?,
            "z_min" => self.ingest.z_bounds.0 = float(key, value)?,
            "z_max" => self.ingest.z_bounds.1 = float(key, value)?,
            "dem_classes" => self.ingest.dem_classes = classes(key, value)?,
            "noise_classes" => self.ingest.noise_classes = classes(key, value)?,
            "latitude" => self.solar.latitude = float(key, value)?,
            "leaf_on_day" => self.leaf_on_day = num(key, value)?,
            "leaf_off_day" => self.leaf_off_day = num(key, value)?,
            "linke_turbidity" => self.solar.linke_turbidity = float(key, value)?,
            "albedo" => self.solar.albedo = float(key, value)?,
            "time_step" => self.solar.time_step = float(key, value)?,
            "shadow_max_distance" => self.solar.shadow_max_distance = float(key, value)?,
            "terrain_mode" => self.solar.terrain_mode = value.parse::<TerrainMode>()?,
            "tree_height_threshold" => self.classify.tree_height_threshold = float(key, value)?,
            "evergreen_threshold" => self.classify.evergreen_threshold = float(key, value)?,
            "roi_center_x" => self.roi.center_x = float(key, value)?,
            "roi_center_y" => self.roi.center_y = float(key, value)?,
            "roi_radius" => self.roi.radius = float(key, value)?,
            "canopy_threshold" => {
                self.canopy_threshold = if value.eq_ignore_ascii_case("otsu") {
                    ThresholdMode::Otsu
                } else {
                    ThresholdMode::Fixed(num(key, value)?)
                }
            }
            "v_override" => self.v_override = opt_f(key)?,
            "f_override" => self.f_override = opt_f(key)?,
            "evergreen_shade_override" => self.evergreen_shade_override = opt_f(key)?,
            "threads" => self.threads = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn solar_for_day(&self, day: u16) -> SolarConfig {
        SolarConfig {
            day_of_year: day,
            ..self.solar
        }
    }

    /// Explicit grid from the four grid keys, if all were given.
    pub fn explicit_grid(&self) -> Result<Option<GridSpec>> {
        match (self.x_origin, self.y_origin, self.ncols, self.nrows) {
            (None, None, None, None) => Ok(None),
            (Some(x), Some(y), Some(nc), Some(nr)) => GridSpec::new(nc, nr, x, y, self.ingest.cell_size).map(Some),
            _ => Err(Error::Config(
                "x_origin, y_origin, ncols and nrows must be given together".into(),
            )),
        }
    }

    /// Checks values and the existence of every input before any compute.
    pub fn validate(&self) -> Result<()> {
        self.ingest.validate()?;
        self.explicit_grid()?;
        for day in [self.leaf_on_day, self.leaf_off_day] {
            self.solar_for_day(day).validate()?;
        }
        if self.leaf_on_day == self.leaf_off_day {
            return Err(Error::Config(format!(
                "leaf_on_day and leaf_off_day must differ, both are {}",
                self.leaf_on_day
            )));
        }
        if self.fill_radius == 0 {
            return Err(Error::Config("fill_radius must be >= 1".into()));
        }
        self.classify.validate()?;
        if let Some(f) = self.f_override {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("f_override must lie in [0, 1], got {f}")));
            }
        } else if self.photos.is_empty() {
            return Err(Error::Config("either photos or f_override is required".into()));
        }
        let required = [
            ("points", &self.points),
            ("zones", &self.zones),
            ("imagery", &self.imagery),
            ("output_dir", &self.output_dir),
        ];
        for (k, p) in required {
            if p.is_none() {
                return Err(Error::Config(format!("missing required key '{k}'")));
            }
        }
        let mut inputs: Vec<(&str, &PathBuf)> = vec![
            ("points", self.points.as_ref().unwrap()),
            ("zones", self.zones.as_ref().unwrap()),
            ("imagery", self.imagery.as_ref().unwrap()),
        ];
        if let Some(fp) = &self.footprints {
            inputs.push(("footprints", fp));
        }
        if self.f_override.is_none() {
            inputs.extend(self.photos.iter().map(|p| ("photos", p)));
        }
        for (k, p) in inputs {
            if !p.is_file() {
                return Err(Error::Config(format!("{k}: input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// The effective configuration as `(key, value)` pairs in [`KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let o = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let join = |s: &BTreeSet<u8>| s.iter().map(u8::to_string).collect::<Vec<_>>().join(",");
        KEYS.iter()
            .map(|k| {
                let v = match k.name {
                    "points" => p(&self.points),
                    "points_format" => match self.points_format {
                        Some(PointFormat::Las) => "las".into(),
                        Some(PointFormat::XyzText) => "xyz".into(),
                        None => String::new(),
                    },
                    "footprints" => p(&self.footprints),
                    "zones" => p(&self.zones),
                    "imagery" => p(&self.imagery),
                    "photos" => self
                        .photos
                        .iter()
                        .map(|p| p.display().to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                    "output_dir" => p(&self.output_dir),
                    "cell_size" => self.ingest.cell_size.to_string(),
                    "x_origin" => o(self.x_origin),
                    "y_origin" => o(self.y_origin),
                    "ncols" => self.ncols.map(|n| n.to_string()).unwrap_or_default(),
                    "nrows" => self.nrows.map(|n| n.to_string()).unwrap_or_default(),
                    "fill_radius" => self.fill_radius.to_string(),
                    "z_min" => self.ingest.z_bounds.0.to_string(),
                    "z_max" => self.ingest.z_bounds.1.to_string(),
                    "dem_classes" => join(&self.ingest.dem_classes),
                    "noise_classes" => join(&self.ingest.noise_classes),
                    "latitude" => self.solar.latitude.to_string(),
                    "leaf_on_day" => self.leaf_on_day.to_string(),
                    "leaf_off_day" => self.leaf_off_day.to_string(),
                    "linke_turbidity" => self.solar.linke_turbidity.to_string(),
                    "albedo" => self.solar.albedo.to_string(),
                    "time_step" => self.solar.time_step.to_string(),
                    "shadow_max_distance" => self.solar.shadow_max_distance.to_string(),
                    "terrain_mode" => match self.solar.terrain_mode {
                        TerrainMode::Horizontal => "horizontal".into(),
                        TerrainMode::TerrainFollowing => "terrain-following".into(),
                    },
                    "tree_height_threshold" => self.classify.tree_height_threshold.to_string(),
                    "evergreen_threshold" => self.classify.evergreen_threshold.to_string(),
                    "roi_center_x" => self.roi.center_x.to_string(),
                    "roi_center_y" => self.roi.center_y.to_string(),
                    "roi_radius" => self.roi.radius.to_string(),
                    "canopy_threshold" => match self.canopy_threshold {
                        ThresholdMode::Otsu => "otsu".into(),
                        ThresholdMode::Fixed(t) => t.to_string(),
                    },
                    "v_override" => o(self.v_override),
                    "f_override" => o(self.f_override),
                    "evergreen_shade_override" => o(self.evergreen_shade_override),
                    "threads" => self.threads.to_string(),
                    other => unreachable!("key {other} missing from to_pairs"),
                };
                (k.name, v)
            })
            .collect()
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
