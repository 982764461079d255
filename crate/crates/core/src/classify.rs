//! Building and tree masks, the Channel% greenness index and the
//! evergreen/deciduous split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{for_each_cell_inside, Polygon};
use crate::raster::{resample_to, substitute, BinaryMask, GridSpec, Raster, Resample, Source, DEFAULT_NODATA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    /// Objects taller than this above `building_DEM` are trees (meters).
    pub tree_height_threshold: f64,
    /// Tree pixels whose Channel% exceeds this are evergreen.
    pub evergreen_threshold: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            tree_height_threshold: 2.5,
            evergreen_threshold: 0.375,
        }
    }
}

impl ClassifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tree_height_threshold > 0.0) {
            return Err(Error::Config(format!(
                "tree height threshold must be > 0, got {}",
                self.tree_height_threshold
            )));
        }
        if !(self.evergreen_threshold > 0.0 && self.evergreen_threshold < 1.0) {
            return Err(Error::Config(format!(
                "evergreen threshold must lie in (0, 1), got {}",
                self.evergreen_threshold
            )));
        }
        Ok(())
    }
}

/// 8-bit RGB pixels in row-major order, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbPixels {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl RgbPixels {
    pub fn new(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Shape(format!(
                "image {width}x{height} with {} pixels",
                data.len()
            )));
        }
        Ok(RgbPixels {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, px: [u8; 3]) -> Self {
        RgbPixels {
            width,
            height,
            data: vec![px; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [u8; 3]) {
        self.data[y * self.width + x] = px;
    }
}

/// Georeferenced imagery: pixels plus the grid they occupy.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub pixels: RgbPixels,
    pub spec: GridSpec,
}

impl RgbImage {
    pub fn new(pixels: RgbPixels, spec: GridSpec) -> Result<Self> {
        if spec.ncols != pixels.width || spec.nrows != pixels.height {
            return Err(Error::Shape(format!(
                "image is {}x{} but its grid is {}x{}",
                pixels.width, pixels.height, spec.ncols, spec.nrows
            )));
        }
        Ok(RgbImage { pixels, spec })
    }
}

/// `G / (R + G + B)`, or `None` for a black pixel.
#[inline]
pub fn channel_index([r, g, b]: [u8; 3]) -> Option<f64> {
    let sum = r as u32 + g as u32 + b as u32;
    (sum > 0).then(|| g as f64 / sum as f64)
}

/// Rasterizes footprints by pixel-center containment, then substitutes the
/// DSM into the DEM under them. Returns `(building_DEM, building mask)`.
pub fn building_dem(dem: &Raster, dsm: &Raster, footprints: &[Polygon]) -> Result<(Raster, BinaryMask)> {
    dem.spec().ensure_same(dsm.spec(), "building_dem DSM")?;
    let spec = *dem.spec();
    let mut values = vec![0.0; spec.len()];
    for poly in footprints {
        poly.validate()?;
        for_each_cell_inside(poly, &spec, |c, r| values[spec.index(c, r)] = 1.0);
    }
    let mask = BinaryMask::new(Raster::new(spec, values, DEFAULT_NODATA)?)?;
    let bdem = substitute(dem, &mask, Source::Raster(dsm))?;
    Ok((bdem, mask))
}

/// 1 where `dsm - building_dem` strictly exceeds the height threshold.
pub fn tree_mask(dsm: &Raster, building_dem: &Raster, cfg: &ClassifyConfig) -> Result<BinaryMask> {
    dsm.spec().ensure_same(building_dem.spec(), "tree_mask")?;
    let spec = *dsm.spec();
    Ok(BinaryMask::from_fn(spec, |c, r| {
        let i = spec.index(c, r);
        Some(dsm.at(i)? - building_dem.at(i)? > cfg.tree_height_threshold)
    }))
}

/// Channel% at the imagery's native resolution, mean-resampled onto
/// `target`.
pub fn channel_percent(img: &RgbImage, target: &GridSpec) -> Result<Raster> {
    let native = Raster::from_fn(img.spec, |c, r| channel_index(img.pixels.get(c, r)));
    resample_to(&native, target, Resample::Mean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeSplit {
    pub evergreen: BinaryMask,
    pub deciduous: BinaryMask,
    /// Tree pixels without a Channel% value, counted as deciduous.
    pub defaulted: usize,
}

pub fn split_trees(chan: &Raster, tree: &BinaryMask, cfg: &ClassifyConfig) -> Result<TreeSplit> {
    chan.spec().ensure_same(tree.spec(), "split_trees")?;
    let spec = *tree.spec();
    let t = cfg.evergreen_threshold;
    let evergreen = BinaryMask::from_fn(spec, |c, r| {
        let i = spec.index(c, r);
        let is_tree = tree.state(i)?;
        Some(is_tree && chan.at(i).is_some_and(|v| v > t))
    });
    let deciduous = BinaryMask::from_fn(spec, |c, r| {
        let i = spec.index(c, r);
        let is_tree = tree.state(i)?;
        Some(is_tree && chan.at(i).is_none_or(|v| v <= t))
    });
    let defaulted = (0..spec.len())
        .filter(|&i| tree.is_set(i) && chan.at(i).is_none())
        .count();
    if defaulted > 0 {
        log::warn!("{defaulted} tree pixels have no Channel% value; treated as deciduous");
    }
    Ok(TreeSplit {
        evergreen,
        deciduous,
        defaulted,
    })
}

/// DEM with the DSM substituted under `mask`: evergreen_DEM or
/// deciduous_DEM depending on the mask.
pub fn tree_type_dem(dem: &Raster, dsm: &Raster, mask: &BinaryMask) -> Result<Raster> {
    dem.spec().ensure_same(dsm.spec(), "tree_type_dem DSM")?;
    substitute(dem, mask, Source::Raster(dsm))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMasks {
    pub building: BinaryMask,
    pub tree: BinaryMask,
    pub evergreen: BinaryMask,
    pub deciduous: BinaryMask,
}

impl SceneMasks {
    pub fn spec(&self) -> &GridSpec {
        self.building.spec()
    }

    pub fn check(&self) -> Result<()> {
        let s = self.spec();
        for (name, m) in [("tree", &self.tree), ("evergreen", &self.evergreen), ("deciduous", &self.deciduous)] {
            s.ensure_same(m.spec(), name)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Classified {
    pub building_dem: Raster,
    pub channel_percent: Raster,
    pub evergreen_dem: Raster,
    pub deciduous_dem: Raster,
    pub masks: SceneMasks,
    pub defaulted_tree_pixels: usize,
}

/// The whole classification stage: building_DEM, tree mask, Channel%,
/// evergreen/deciduous split and the two tree-type DEMs.
pub fn classify_scene(
    dem: &Raster,
    dsm: &Raster,
    footprints: &[Polygon],
    imagery: &RgbImage,
    cfg: &ClassifyConfig,
) -> Result<Classified> {
    cfg.validate()?;
    let (bdem, building) = building_dem(dem, dsm, footprints)?;
    let tree = tree_mask(dsm, &bdem, cfg)?;
    let chan = channel_percent(imagery, dem.spec())?;
    let split = split_trees(&chan, &tree, cfg)?;
    let evergreen_dem = tree_type_dem(dem, dsm, &split.evergreen)?;
    let deciduous_dem = tree_type_dem(dem, dsm, &split.deciduous)?;
    Ok(Classified {
        building_dem: bdem,
        channel_percent: chan,
        evergreen_dem,
        deciduous_dem,
        masks: SceneMasks {
            building,
            tree,
            evergreen: split.evergreen,
            deciduous: split.deciduous,
        },
        defaulted_tree_pixels: split.defaulted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ND: f64 = DEFAULT_NODATA;

    fn spec(n: usize) -> GridSpec {
        GridSpec::new(n, 1, 0.0, 0.0, 1.0).unwrap()
    }

    fn r(values: &[f64]) -> Raster {
        Raster::new(spec(values.len()), values.to_vec(), ND).unwrap()
    }

    fn m(values: &[f64]) -> BinaryMask {
        BinaryMask::new(r(values)).unwrap()
    }

    #[test]
    fn no_footprints_keeps_dem() {
        let dem = r(&[1.0, 2.0]);
        let (bdem, mask) = building_dem(&dem, &r(&[5.0, 6.0]), &[]).unwrap();
        assert_eq!(bdem, dem);
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn footprint_substitutes_dsm() {
        let dem = r(&[100.0, 100.0, 100.0]);
        let dsm = r(&[100.0, 130.0, 100.0]);
        let fp = Polygon::new(vec![vec![[1.2, 0.2], [1.8, 0.2], [1.8, 0.8], [1.2, 0.8]]]).unwrap();
        let (bdem, mask) = building_dem(&dem, &dsm, &[fp]).unwrap();
        assert_eq!(bdem.values(), &[100.0, 130.0, 100.0]);
        assert_eq!(mask.as_raster().values(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn degenerate_footprint_rejected() {
        let fp = Polygon {
            rings: vec![vec![[0.0, 0.0], [1.0, 1.0]]],
        };
        let err = building_dem(&r(&[1.0]), &r(&[1.0]), &[fp]);
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn tree_mask_strict_threshold() {
        let cfg = ClassifyConfig::default();
        let dsm = r(&[10.0, 7.5, 30.0, ND, 4.0]);
        let bdem = r(&[5.0, 5.0, 30.0, 1.0, ND]);
        let t = tree_mask(&dsm, &bdem, &cfg).unwrap();
        assert_eq!(t.as_raster().values(), &[1.0, 0.0, 0.0, ND, ND]);
    }

    #[test]
    fn channel_index_values() {
        assert!((channel_index([100, 100, 100]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(channel_index([0, 255, 0]), Some(1.0));
        assert!((channel_index([120, 100, 90]).unwrap() - 100.0 / 310.0).abs() < 1e-15);
        assert_eq!(channel_index([0, 0, 0]), None);
    }

    #[test]
    fn channel_percent_averages_ratios_not_bands() {
        // two native pixels per target pixel: ratio-of-mean would give
        // 255/(255+255) = 0.5; mean-of-ratios gives (1 + 0) / 2 = 0.5 too,
        // so use an asymmetric pair
        let px = RgbPixels::new(2, 1, vec![[0, 200, 0], [100, 50, 50]]).unwrap();
        let img = RgbImage::new(px, GridSpec::new(2, 1, 0.0, 0.0, 0.5).unwrap()).unwrap();
        let out = channel_percent(&img, &spec(1)).unwrap();
        let expected = (1.0 + 50.0 / 200.0) / 2.0;
        assert!((out.values()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn split_by_threshold() {
        let cfg = ClassifyConfig::default();
        let chan = r(&[0.5, 0.375, 0.9, ND, 0.2]);
        let tree = m(&[1.0, 1.0, 0.0, 1.0, ND]);
        let s = split_trees(&chan, &tree, &cfg).unwrap();
        assert_eq!(s.evergreen.as_raster().values(), &[1.0, 0.0, 0.0, 0.0, ND]);
        assert_eq!(s.deciduous.as_raster().values(), &[0.0, 1.0, 0.0, 1.0, ND]);
        assert_eq!(s.defaulted, 1);
    }

    #[test]
    fn tree_type_dem_locality() {
        let dem = r(&[100.0, 100.0, 100.0]);
        let dsm = r(&[112.0, 109.0, 101.0]);
        let ever = m(&[1.0, 0.0, 0.0]);
        let dec = m(&[0.0, 1.0, 0.0]);
        assert_eq!(tree_type_dem(&dem, &dsm, &ever).unwrap().values(), &[112.0, 100.0, 100.0]);
        assert_eq!(tree_type_dem(&dem, &dsm, &dec).unwrap().values(), &[100.0, 109.0, 100.0]);
        assert_eq!(tree_type_dem(&dem, &dsm, &m(&[0.0, 0.0, 0.0])).unwrap(), dem);
    }

    #[test]
    fn config_validation() {
        assert!(ClassifyConfig { evergreen_threshold: 1.0, ..Default::default() }.validate().is_err());
        assert!(ClassifyConfig { tree_height_threshold: 0.0, ..Default::default() }.validate().is_err());
    }
}
