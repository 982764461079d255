//! Synthetic scenes for demos and tests.
//!
//! The twin-tree scene is a flat lot with two identical cylindrical crowns,
//! one evergreen (green in the leaf-off imagery) and one deciduous, a
//! parking polygon centered under each, a small building, a road strip and
//! three canopy photos.

use std::fs;
use std::path::{Path, PathBuf};

use crate::canopy::{CanopyPhoto, Roi};
use crate::classify::{RgbImage, RgbPixels};
use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::io::{geojson, image};
use crate::lidar::{write_las, PointRecord, CLASS_GROUND};
use crate::raster::GridSpec;

const CLASS_HIGH_VEGETATION: u8 = 5;
const CLASS_BUILDING: u8 = 6;

pub const EVERGREEN_RGB: [u8; 3] = [40, 120, 40];
pub const DECIDUOUS_RGB: [u8; 3] = [110, 100, 90];
pub const BACKGROUND_RGB: [u8; 3] = [128, 128, 128];

#[derive(Debug, Clone)]
pub struct TwinTreeScene {
    /// Grid columns and rows.
    pub size: usize,
    pub cell_size: f64,
    pub origin: (f64, f64),
    pub crown_height: f64,
    /// In cells.
    pub crown_radius: usize,
    /// Parking lot half-width in cells.
    pub lot_half: usize,
    pub building_height: f64,
    pub building_half: usize,
    /// Imagery pixels per grid cell along each axis.
    pub imagery_factor: usize,
    pub photo_ratios: Vec<f64>,
    pub photo_size: usize,
}

impl Default for TwinTreeScene {
    fn default() -> Self {
        TwinTreeScene {
            size: 512,
            cell_size: 0.5,
            origin: (710_000.0, 3_960_000.0),
            crown_height: 8.0,
            crown_radius: 8,
            lot_half: 24,
            building_height: 10.0,
            building_half: 6,
            imagery_factor: 2,
            photo_ratios: vec![0.60, 0.70, 0.71],
            photo_size: 200,
        }
    }
}

/// Paths of a written scene.
#[derive(Debug, Clone)]
pub struct SceneFiles {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub points: PathBuf,
    pub footprints: PathBuf,
    pub zones: PathBuf,
    pub imagery: PathBuf,
    pub photos: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cover {
    Ground,
    Evergreen,
    Deciduous,
    Building,
}

impl TwinTreeScene {
    pub fn spec(&self) -> GridSpec {
        GridSpec::new(self.size, self.size, self.origin.0, self.origin.1, self.cell_size).expect("valid scene grid")
    }

    /// Crown centers as (col, row): evergreen first. The scene is mirror
    /// symmetric about the building's column, so with a day symmetric about
    /// noon both lots see the same leaf-on irradiation.
    pub fn tree_centers(&self) -> [(usize, usize); 2] {
        let n = self.size;
        let (axis, _) = self.building_center();
        let half_gap = n / 5;
        [(axis - half_gap, n / 2), (axis + half_gap, n / 2)]
    }

    fn building_center(&self) -> (usize, usize) {
        (self.size / 2, self.size / 5)
    }

    fn cover(&self, col: usize, row: usize) -> Cover {
        let [ev, de] = self.tree_centers();
        let r2 = (self.crown_radius * self.crown_radius) as isize;
        let inside = |(c, r): (usize, usize)| {
            let dc = col as isize - c as isize;
            let dr = row as isize - r as isize;
            dc * dc + dr * dr < r2
        };
        let (bc, br) = self.building_center();
        let bh = self.building_half;
        if inside(ev) {
            Cover::Evergreen
        } else if inside(de) {
            Cover::Deciduous
        } else if col.abs_diff(bc) < bh && row.abs_diff(br) < bh {
            Cover::Building
        } else {
            Cover::Ground
        }
    }

    /// One ground point per cell (a second return beneath crowns and
    /// roofs) plus a first return on every crown and roof cell.
    pub fn points(&self) -> Vec<PointRecord> {
        let spec = self.spec();
        let mut out = Vec::with_capacity(spec.len() + 1024);
        for row in 0..self.size {
            for col in 0..self.size {
                let (x, y) = spec.cell_center(col, row);
                let cover = self.cover(col, row);
                let top = match cover {
                    Cover::Evergreen | Cover::Deciduous => Some((self.crown_height, CLASS_HIGH_VEGETATION)),
                    Cover::Building => Some((self.building_height, CLASS_BUILDING)),
                    Cover::Ground => None,
                };
                if let Some((z, class)) = top {
                    out.push(PointRecord {
                        x,
                        y,
                        z,
                        classification: class,
                        return_number: 1,
                    });
                }
                out.push(PointRecord {
                    x,
                    y,
                    z: 0.0,
                    classification: CLASS_GROUND,
                    return_number: if top.is_some() { 2 } else { 1 },
                });
            }
        }
        out
    }

    pub fn imagery(&self) -> RgbImage {
        let k = self.imagery_factor.max(1);
        let n = self.size * k;
        let mut px = RgbPixels::filled(n, n, BACKGROUND_RGB);
        for y in 0..n {
            for x in 0..n {
                match self.cover(x / k, y / k) {
                    Cover::Evergreen => px.set(x, y, EVERGREEN_RGB),
                    Cover::Deciduous => px.set(x, y, DECIDUOUS_RGB),
                    _ => {}
                }
            }
        }
        let spec = self.spec();
        let img_spec = GridSpec::new(n, n, spec.x_origin, spec.y_origin, self.cell_size / k as f64)
            .expect("valid imagery grid");
        RgbImage::new(px, img_spec).expect("matching imagery size")
    }

    fn square(&self, (col, row): (usize, usize), half: usize) -> Polygon {
        let spec = self.spec();
        let cs = self.cell_size;
        let x0 = spec.x_origin + (col as f64 - half as f64) * cs;
        let x1 = spec.x_origin + (col as f64 + half as f64 + 1.0) * cs;
        let y_top = spec.y_max() - (row as f64 - half as f64) * cs;
        let y_bot = spec.y_max() - (row as f64 + half as f64 + 1.0) * cs;
        Polygon::new(vec![vec![[x0, y_bot], [x1, y_bot], [x1, y_top], [x0, y_top], [x0, y_bot]]])
            .expect("valid square")
    }

    pub fn footprints(&self) -> Vec<Polygon> {
        vec![self.square(self.building_center(), self.building_half - 1)]
    }

    /// `(id, kind, polygon)`: a lot under each crown and a road strip.
    pub fn zones(&self) -> Vec<(String, String, Polygon)> {
        let [ev, de] = self.tree_centers();
        let spec = self.spec();
        let cs = self.cell_size;
        let road_row = self.size * 4 / 5;
        let y_top = spec.y_max() - road_row as f64 * cs;
        let road = Polygon::new(vec![vec![
            [spec.x_origin + 4.0 * cs, y_top - 6.0 * cs],
            [spec.x_max() - 4.0 * cs, y_top - 6.0 * cs],
            [spec.x_max() - 4.0 * cs, y_top],
            [spec.x_origin + 4.0 * cs, y_top],
            [spec.x_origin + 4.0 * cs, y_top - 6.0 * cs],
        ]])
        .expect("valid road");
        vec![
            ("lot-evergreen".into(), "parking".into(), self.square(ev, self.lot_half)),
            ("lot-deciduous".into(), "parking".into(), self.square(de, self.lot_half)),
            ("road-1".into(), "road".into(), road),
        ]
    }

    /// Upward photo whose roi has exactly `round(ratio * n)` sky pixels.
    pub fn photo(&self, ratio: f64) -> RgbPixels {
        let s = self.photo_size;
        let dark = RgbPixels::filled(s, s, [30, 45, 25]);
        let probe = CanopyPhoto::new(dark.clone(), Roi::default()).expect("roi fits");
        let roi = probe.roi_pixels();
        let sky = (ratio.clamp(0.0, 1.0) * roi.len() as f64).round() as usize;
        let mut px = dark;
        for &(x, y) in roi.iter().take(sky) {
            px.set(x, y, [210, 225, 245]);
        }
        px
    }

    /// Writes every input plus `seasol.conf` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<SceneFiles> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let points = dir.join("points.las");
        write_las(&points, &self.points(), 0.01)?;

        let imagery = dir.join("imagery.ppm");
        image::write_georeferenced(&self.imagery(), &imagery)?;

        let footprints = dir.join("footprints.geojson");
        let fps = self.footprints();
        let text = geojson::encode_features(fps.iter().map(|p| (p, vec![("id", "b1".to_string())])));
        fs::write(&footprints, text).map_err(|e| Error::io(&footprints, e))?;

        let zones = dir.join("zones.geojson");
        let zs = self.zones();
        let text = geojson::encode_features(
            zs.iter()
                .map(|(id, kind, p)| (p, vec![("id", id.clone()), ("kind", kind.clone())])),
        );
        fs::write(&zones, text).map_err(|e| Error::io(&zones, e))?;

        let mut photos = Vec::new();
        for (i, &r) in self.photo_ratios.iter().enumerate() {
            let p = dir.join(format!("photo_{}.ppm", i + 1));
            image::write_ppm(&self.photo(r), &p)?;
            photos.push(p);
        }

        let spec = self.spec();
        let names: Vec<String> = photos
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        let config = dir.join("seasol.conf");
        let text = format!(
            "# twin-tree scene\n\
             points = points.las\n\
             footprints = footprints.geojson\n\
             zones = zones.geojson\n\
             imagery = imagery.ppm\n\
             photos = {}\n\
             output_dir = out\n\
             cell_size = {}\n\
             x_origin = {}\n\
             y_origin = {}\n\
             ncols = {}\n\
             nrows = {}\n",
            names.join(", "),
            spec.cell_size,
            spec.x_origin,
            spec.y_origin,
            spec.ncols,
            spec.nrows
        );
        fs::write(&config, text).map_err(|e| Error::io(&config, e))?;
        Ok(SceneFiles {
            dir: dir.to_path_buf(),
            config,
            points,
            footprints,
            zones,
            imagery,
            photos,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canopy::{crown_transparency, ThresholdMode};

    #[test]
    fn scene_is_mirror_symmetric() {
        let s = TwinTreeScene {
            size: 64,
            ..TwinTreeScene::default()
        };
        let axis = s.building_center().0;
        for row in 0..s.size {
            for col in 0..=2 * axis {
                let a = s.cover(col, row);
                let b = s.cover(2 * axis - col, row);
                let swapped = match b {
                    Cover::Evergreen => Cover::Deciduous,
                    Cover::Deciduous => Cover::Evergreen,
                    other => other,
                };
                assert_eq!(a, swapped, "({col}, {row})");
            }
        }
    }

    #[test]
    fn crowns_are_translates() {
        let s = TwinTreeScene {
            size: 64,
            ..TwinTreeScene::default()
        };
        let [ev, de] = s.tree_centers();
        let shift = de.0 - ev.0;
        for row in 0..s.size {
            for col in 0..s.size - shift {
                let a = s.cover(col, row) == Cover::Evergreen;
                let b = s.cover(col + shift, row) == Cover::Deciduous;
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn photo_ratio_is_exact() {
        let s = TwinTreeScene::default();
        let p = CanopyPhoto::new(s.photo(0.7), Roi::default()).unwrap();
        let t = crown_transparency(&p, ThresholdMode::Otsu).unwrap();
        assert!((t.ratio - 0.7).abs() < 1e-4, "{}", t.ratio);
    }
}
