//! End-to-end run: ingest, classify, four irradiation runs, penetration
//! factor, composites, zonal CSV and a JSON run report.
//!
//! All outputs are written to a staging directory inside `output_dir` and
//! moved into place only after every stage succeeded. On failure the
//! staging directory is removed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::canopy::{penetration_factor, CanopyPhoto, PenetrationEstimate};
use crate::classify::{classify_scene, Classified};
use crate::composite::{compose, CompositeConstants, SeasonInputs, SeasonOutputs};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{geojson, grid, image};
use crate::lidar::{self, PointFormat};
use crate::raster::{min_max, Raster};
use crate::solar::daily_irradiation;
use crate::zonal::{rasterize_zones, write_csv, zonal_means, ZonalRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Ingest,
    Classify,
    Irradiation,
    Canopy,
    Composite,
    Zonal,
    Output,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Ingest => "ingest",
            Stage::Classify => "classify",
            Stage::Irradiation => "irradiation",
            Stage::Canopy => "canopy",
            Stage::Composite => "composite",
            Stage::Zonal => "zonal",
            Stage::Output => "output",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage '{}' failed: {source}", stage.name())]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait StageExt<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterSummary {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub valid: usize,
    pub nodata: usize,
}

impl RasterSummary {
    pub fn of(r: &Raster) -> Self {
        let mm = min_max(r).ok();
        let valid = r.valid_count();
        RasterSummary {
            min: mm.map(|m| m.0),
            max: mm.map(|m| m.1),
            valid,
            nodata: r.spec().len() - valid,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningCounts {
    pub points_dropped: usize,
    pub dsm_voids_unfilled: usize,
    pub dem_voids_unfilled: usize,
    pub defaulted_tree_pixels: usize,
    pub degenerate_photos: usize,
    pub zone_overlap_pixels: usize,
    pub empty_zones: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportConstants {
    #[serde(flatten)]
    pub composite: CompositeConstants,
    /// Evergreen Channel% threshold.
    pub t: f64,
    pub tree_height_threshold: f64,
    pub f_source: String,
    pub per_photo_ratios: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: BTreeMap<String, String>,
    pub grid: crate::raster::GridSpec,
    pub timings: Vec<StageTiming>,
    pub rasters: BTreeMap<String, RasterSummary>,
    pub constants: ReportConstants,
    pub warnings: WarningCounts,
    pub outputs: Vec<String>,
}

pub struct PipelineOutputs {
    pub season: SeasonOutputs,
    pub zonal: Vec<ZonalRow>,
    pub report: RunReport,
    pub output_dir: PathBuf,
}

/// Ingested surfaces.
pub struct Surfaces {
    pub dsm: Raster,
    pub dem: Raster,
    pub points_dropped: usize,
}

/// Reads points, drops noise and grids the void-filled DSM and DEM.
pub fn ingest(cfg: &RunConfig) -> Result<Surfaces> {
    let path = cfg
        .points
        .as_deref()
        .ok_or_else(|| Error::Config("missing required key 'points'".into()))?;
    let format = cfg.points_format.unwrap_or_else(|| PointFormat::from_path(path));
    let raw = lidar::read_points(path, format)?;
    let points = lidar::filter_noise(&raw, &cfg.ingest);
    let dropped = raw.len() - points.len();
    if dropped > 0 {
        log::info!("dropped {dropped} noise points of {}", raw.len());
    }
    let spec = match cfg.explicit_grid()? {
        Some(s) => s,
        None => lidar::spec_for_points(&points, cfg.ingest.cell_size)?,
    };
    let dsm = lidar::fill_voids(&lidar::grid_dsm(&points, &spec), cfg.fill_radius)?;
    let dem = lidar::fill_voids(&lidar::grid_dem(&points, &spec, &cfg.ingest), cfg.fill_radius)?;
    Ok(Surfaces {
        dsm,
        dem,
        points_dropped: dropped,
    })
}

/// Footprints (optional) and georeferenced imagery, then classification.
pub fn classify(cfg: &RunConfig, s: &Surfaces) -> Result<Classified> {
    let footprints = match &cfg.footprints {
        Some(p) => geojson::read_footprints(p)?,
        None => Vec::new(),
    };
    let imagery_path = cfg
        .imagery
        .as_deref()
        .ok_or_else(|| Error::Config("missing required key 'imagery'".into()))?;
    let imagery = image::read_georeferenced(imagery_path)?;
    classify_scene(&s.dem, &s.dsm, &footprints, &imagery, &cfg.classify)
}

pub struct IrradiationRuns {
    pub leaf_on: Raster,
    pub b: Raster,
    pub e: Raster,
    pub d: Raster,
}

pub fn irradiation_runs(cfg: &RunConfig, s: &Surfaces, c: &Classified) -> Result<IrradiationRuns> {
    let on = cfg.solar_for_day(cfg.leaf_on_day);
    let off = cfg.solar_for_day(cfg.leaf_off_day);
    Ok(IrradiationRuns {
        leaf_on: daily_irradiation(&s.dsm, &on)?,
        b: daily_irradiation(&c.building_dem, &off)?,
        e: daily_irradiation(&c.evergreen_dem, &off)?,
        d: daily_irradiation(&c.deciduous_dem, &off)?,
    })
}

/// Penetration factor from the override or from the canopy photos.
pub fn canopy_factor(cfg: &RunConfig) -> Result<(PenetrationEstimate, String)> {
    if let Some(f) = cfg.f_override {
        let mut est = PenetrationEstimate::from_ratios(vec![f])?;
        est.per_photo_ratios.clear();
        return Ok((est, "override".into()));
    }
    let photos = cfg
        .photos
        .iter()
        .map(|p| {
            let img = image::read_rgb(p)?;
            CanopyPhoto::new(img, cfg.roi).map_err(|e| Error::Geometry(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let est = penetration_factor(&photos, cfg.canopy_threshold)?;
    if est.degenerate_photos > 0 {
        log::warn!("{} canopy photos had a single-level histogram", est.degenerate_photos);
    }
    Ok((est, format!("{} photos", photos.len())))
}

struct Staging {
    dir: PathBuf,
    files: Vec<String>,
    done: bool,
}

impl Staging {
    fn new(output_dir: &Path) -> Result<Self> {
        fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
        let dir = output_dir.join(format!(".partial-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Staging {
            dir,
            files: Vec::new(),
            done: false,
        })
    }

    fn grid(&mut self, name: &str, r: &Raster) -> Result<()> {
        let file = format!("{name}.asc");
        grid::write_grid(r, &self.dir.join(&file))?;
        self.files.push(file);
        Ok(())
    }

    fn bytes(&mut self, file: &str, data: &[u8]) -> Result<()> {
        let p = self.dir.join(file);
        fs::write(&p, data).map_err(|e| Error::io(&p, e))?;
        self.files.push(file.to_string());
        Ok(())
    }

    fn commit(mut self, output_dir: &Path) -> Result<()> {
        for f in &self.files {
            let to = output_dir.join(f);
            fs::rename(self.dir.join(f), &to).map_err(|e| Error::io(&to, e))?;
        }
        fs::remove_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        self.done = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

/// Runs every stage in a thread pool of `cfg.threads` workers.
pub fn run_pipeline(cfg: &RunConfig) -> std::result::Result<PipelineOutputs, PipelineError> {
    cfg.validate().stage(Stage::Validate)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
        .stage(Stage::Validate)?;
    pool.install(|| run_stages(cfg))
}

fn run_stages(cfg: &RunConfig) -> std::result::Result<PipelineOutputs, PipelineError> {
    let output_dir = cfg.output_dir.clone().expect("validated");
    let mut out = Staging::new(&output_dir).stage(Stage::Output)?;
    let mut timings = Vec::new();
    let mut summaries = BTreeMap::new();
    let mut warnings = WarningCounts::default();
    let mut clock = Instant::now();
    let mut lap = |stage: Stage, timings: &mut Vec<StageTiming>| {
        timings.push(StageTiming {
            stage,
            seconds: clock.elapsed().as_secs_f64(),
        });
        clock = Instant::now();
    };
    let mut emit = |out: &mut Staging, name: &str, r: &Raster, stage: Stage| {
        summaries.insert(name.to_string(), RasterSummary::of(r));
        out.grid(name, r).stage(stage)
    };

    let surfaces = ingest(cfg).stage(Stage::Ingest)?;
    warnings.points_dropped = surfaces.points_dropped;
    warnings.dsm_voids_unfilled = surfaces.dsm.spec().len() - surfaces.dsm.valid_count();
    warnings.dem_voids_unfilled = surfaces.dem.spec().len() - surfaces.dem.valid_count();
    for (what, n) in [("DSM", warnings.dsm_voids_unfilled), ("DEM", warnings.dem_voids_unfilled)] {
        if n > 0 {
            log::warn!("{n} {what} pixels remain nodata after void filling");
        }
    }
    emit(&mut out, "dsm", &surfaces.dsm, Stage::Ingest)?;
    emit(&mut out, "dem", &surfaces.dem, Stage::Ingest)?;
    lap(Stage::Ingest, &mut timings);

    let classified = classify(cfg, &surfaces).stage(Stage::Classify)?;
    warnings.defaulted_tree_pixels = classified.defaulted_tree_pixels;
    for (name, r) in [
        ("building_dem", &classified.building_dem),
        ("channel_percent", &classified.channel_percent),
        ("evergreen_dem", &classified.evergreen_dem),
        ("deciduous_dem", &classified.deciduous_dem),
        ("building_mask", classified.masks.building.as_raster()),
        ("tree_mask", classified.masks.tree.as_raster()),
        ("evergreen_mask", classified.masks.evergreen.as_raster()),
        ("deciduous_mask", classified.masks.deciduous.as_raster()),
    ] {
        emit(&mut out, name, r, Stage::Classify)?;
    }
    lap(Stage::Classify, &mut timings);

    let runs = irradiation_runs(cfg, &surfaces, &classified).stage(Stage::Irradiation)?;
    for (name, r) in [
        ("irradiation_leaf_on_dsm", &runs.leaf_on),
        ("irradiation_leaf_off_building", &runs.b),
        ("irradiation_leaf_off_evergreen", &runs.e),
        ("irradiation_leaf_off_deciduous", &runs.d),
    ] {
        emit(&mut out, name, r, Stage::Irradiation)?;
    }
    lap(Stage::Irradiation, &mut timings);

    let (estimate, f_source) = canopy_factor(cfg).stage(Stage::Canopy)?;
    warnings.degenerate_photos = estimate.degenerate_photos;
    lap(Stage::Canopy, &mut timings);

    let inputs = SeasonInputs {
        leaf_on_irr: runs.leaf_on,
        b: runs.b,
        e: runs.e,
        d: runs.d,
        masks: classified.masks,
        f: estimate.factor,
        v_override: cfg.v_override,
        evergreen_override: cfg.evergreen_shade_override,
    };
    let (season, constants) = compose(&inputs).stage(Stage::Composite)?;
    for (name, r) in [
        ("deciduous_adjusted", &season.d_adjusted),
        ("evergreen_substituted", &season.e_sub),
        ("deciduous_substituted", &season.d_sub),
        ("leaf_on", &season.leaf_on),
        ("leaf_off", &season.leaf_off),
    ] {
        emit(&mut out, name, r, Stage::Composite)?;
    }
    lap(Stage::Composite, &mut timings);

    let zones = geojson::read_zones(cfg.zones.as_deref().expect("validated")).stage(Stage::Zonal)?;
    let labels = rasterize_zones(&zones, season.leaf_on.spec()).stage(Stage::Zonal)?;
    warnings.zone_overlap_pixels = labels.overlap_pixels;
    let rows = zonal_means(&season.leaf_on, &season.leaf_off, &labels.labels, &zones).stage(Stage::Zonal)?;
    warnings.empty_zones = rows.iter().filter(|r| r.pixel_count == 0).count();
    if warnings.empty_zones > 0 {
        log::warn!("{} zones cover no pixel centers", warnings.empty_zones);
    }
    emit(&mut out, "zone_labels", &labels.labels, Stage::Zonal)?;
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv).stage(Stage::Zonal)?;
    out.bytes("zonal.csv", &csv).stage(Stage::Zonal)?;
    lap(Stage::Zonal, &mut timings);

    let mut outputs = out.files.clone();
    outputs.push("report.json".into());
    let report = RunReport {
        config: cfg.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        grid: *season.leaf_on.spec(),
        timings,
        rasters: summaries,
        constants: ReportConstants {
            composite: constants,
            t: cfg.classify.evergreen_threshold,
            tree_height_threshold: cfg.classify.tree_height_threshold,
            f_source,
            per_photo_ratios: estimate.per_photo_ratios,
        },
        warnings,
        outputs,
    };
    let json = serde_json::to_vec_pretty(&report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))
        .stage(Stage::Output)?;
    out.bytes("report.json", &json).stage(Stage::Output)?;
    out.commit(&output_dir).stage(Stage::Output)?;

    Ok(PipelineOutputs {
        season,
        zonal: rows,
        report,
        output_dir,
    })
}
