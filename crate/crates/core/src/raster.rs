//! Georeferenced grids and the pixel algebra the rest of the crate composes.
//!
//! Storage is row-major with row 0 the northernmost row. The grid origin
//! (`x_origin`, `y_origin`) is the lower-left corner of the south-west cell,
//! matching the ESRI ASCII grid convention.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;
pub const DEFAULT_CELL_SIZE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ncols: usize,
    pub nrows: usize,
    /// Easting of the lower-left corner.
    pub x_origin: f64,
    /// Northing of the lower-left corner.
    pub y_origin: f64,
    pub cell_size: f64,
}

impl GridSpec {
    pub fn new(
        ncols: usize,
        nrows: usize,
        x_origin: f64,
        y_origin: f64,
        cell_size: f64,
    ) -> Result<Self> {
        let spec = GridSpec {
            ncols,
            nrows,
            x_origin,
            y_origin,
            cell_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(Error::Argument(format!(
                "grid must have at least one row and column, got {}x{}",
                self.ncols, self.nrows
            )));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::Argument(format!(
                "cell size must be positive, got {}",
                self.cell_size
            )));
        }
        if !self.x_origin.is_finite() || !self.y_origin.is_finite() {
            return Err(Error::Argument("grid origin must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_max(&self) -> f64 {
        self.x_origin + self.ncols as f64 * self.cell_size
    }

    pub fn y_max(&self) -> f64 {
        self.y_origin + self.nrows as f64 * self.cell_size
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.ncols + col
    }

    /// World coordinates of a cell center.
    #[inline]
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.x_origin + (col as f64 + 0.5) * self.cell_size,
            self.y_origin + (self.nrows as f64 - row as f64 - 0.5) * self.cell_size,
        )
    }

    /// The cell containing a world point. Cells are half-open,
    /// `[x0, x0 + cs) x [y0, y0 + cs)`, so a point on a west or south edge
    /// belongs to the cell east or north of it.
    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.x_origin) / self.cell_size).floor();
        let fy = ((y - self.y_origin) / self.cell_size).floor();
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (cx, cy) = (fx as usize, fy as usize);
        if cx >= self.ncols || cy >= self.nrows {
            return None;
        }
        Some((cx, self.nrows - 1 - cy))
    }

    pub fn ensure_same(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!(
                "{what}: grid {}x{} @({}, {}) cs {} differs from {}x{} @({}, {}) cs {}",
                self.ncols,
                self.nrows,
                self.x_origin,
                self.y_origin,
                self.cell_size,
                other.ncols,
                other.nrows,
                other.x_origin,
                other.y_origin,
                other.cell_size
            )));
        }
        Ok(())
    }

    fn overlaps(&self, other: &GridSpec) -> bool {
        let w = self.x_max().min(other.x_max()) - self.x_origin.max(other.x_origin);
        let h = self.y_max().min(other.y_max()) - self.y_origin.max(other.y_origin);
        w > 0.0 && h > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    spec: GridSpec,
    values: Vec<f64>,
    nodata: f64,
}

impl Raster {
    pub fn new(spec: GridSpec, values: Vec<f64>, nodata: f64) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "expected {} values for a {}x{} grid, got {}",
                spec.len(),
                spec.ncols,
                spec.nrows,
                values.len()
            )));
        }
        if !nodata.is_finite() {
            return Err(Error::Argument("nodata sentinel must be finite".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite value at pixel {} (row {}, col {})",
                i,
                i / spec.ncols,
                i % spec.ncols
            )));
        }
        Ok(Raster {
            spec,
            values,
            nodata,
        })
    }

    pub fn filled(spec: GridSpec, value: f64) -> Self {
        Raster {
            spec,
            values: vec![value; spec.len()],
            nodata: DEFAULT_NODATA,
        }
    }

    pub fn empty(spec: GridSpec) -> Self {
        Raster::filled(spec, DEFAULT_NODATA)
    }

    /// Builds a raster row by row in parallel. `None` becomes nodata.
    pub fn from_fn<F>(spec: GridSpec, f: F) -> Self
    where
        F: Fn(usize, usize) -> Option<f64> + Sync,
    {
        let nodata = DEFAULT_NODATA;
        let values = par_fill(&spec, |col, row| f(col, row).unwrap_or(nodata));
        Raster {
            spec,
            values,
            nodata,
        }
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    #[inline]
    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata
    }

    /// Value at a flat index, `None` for nodata.
    #[inline]
    pub fn at(&self, idx: usize) -> Option<f64> {
        let v = self.values[idx];
        (v != self.nodata).then_some(v)
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        self.at(self.spec.index(col, row))
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != self.nodata).count()
    }

    /// Applies `f` to every valid pixel; nodata stays nodata.
    pub fn map_valid<F>(&self, f: F) -> Raster
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let nodata = self.nodata;
        let values = self
            .values
            .par_iter()
            .map(|&v| if v == nodata { nodata } else { f(v) })
            .collect();
        Raster {
            spec: self.spec,
            values,
            nodata,
        }
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Raster {
        debug_assert_eq!(values.len(), self.spec.len());
        Raster {
            spec: self.spec,
            values,
            nodata: self.nodata,
        }
    }
}

/// Row-parallel fill of a full grid. Each value depends only on its own
/// (col, row) so the result is independent of the thread count.
pub(crate) fn par_fill<F>(spec: &GridSpec, f: F) -> Vec<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut values = vec![0.0; spec.len()];
    values
        .par_chunks_mut(spec.ncols)
        .enumerate()
        .for_each(|(row, chunk)| {
            for (col, v) in chunk.iter_mut().enumerate() {
                *v = f(col, row);
            }
        });
    values
}

/// A raster restricted to {0, 1, nodata}.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask(Raster);

impl BinaryMask {
    pub fn new(raster: Raster) -> Result<Self> {
        let nodata = raster.nodata;
        if let Some(i) = raster
            .values
            .iter()
            .position(|&v| v != 0.0 && v != 1.0 && v != nodata)
        {
            return Err(Error::Argument(format!(
                "mask pixel {} has value {}, expected 0, 1 or nodata",
                i, raster.values[i]
            )));
        }
        Ok(BinaryMask(raster))
    }

    pub fn from_fn<F>(spec: GridSpec, f: F) -> Self
    where
        F: Fn(usize, usize) -> Option<bool> + Sync,
    {
        BinaryMask(Raster::from_fn(spec, |c, r| {
            f(c, r).map(|b| if b { 1.0 } else { 0.0 })
        }))
    }

    pub fn zeros(spec: GridSpec) -> Self {
        BinaryMask(Raster::filled(spec, 0.0))
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec {
        &self.0.spec
    }

    #[inline]
    pub fn as_raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    /// `Some(true)` for 1, `Some(false)` for 0, `None` for nodata.
    #[inline]
    pub fn state(&self, idx: usize) -> Option<bool> {
        self.0.at(idx).map(|v| v == 1.0)
    }

    #[inline]
    pub fn is_set(&self, idx: usize) -> bool {
        self.0.values[idx] == 1.0
    }

    pub fn count(&self) -> usize {
        self.0.values.iter().filter(|&&v| v == 1.0).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Raster(&'a Raster),
    Constant(f64),
}

/// Replaces `base` with `source` wherever `mask` is 1. Nodata in `base`
/// propagates regardless of the mask; a masked pixel whose source raster
/// value is nodata also becomes nodata.
pub fn substitute(base: &Raster, mask: &BinaryMask, source: Source<'_>) -> Result<Raster> {
    base.spec.ensure_same(mask.spec(), "substitute mask")?;
    if let Source::Raster(src) = source {
        base.spec.ensure_same(&src.spec, "substitute source")?;
    }
    let nodata = base.nodata;
    let values = (0..base.values.len())
        .into_par_iter()
        .map(|i| {
            let b = base.values[i];
            if b == nodata {
                return nodata;
            }
            if !mask.is_set(i) {
                return b;
            }
            match source {
                Source::Constant(c) => c,
                Source::Raster(src) => src.at(i).unwrap_or(nodata),
            }
        })
        .collect();
    Ok(base.with_values(values))
}

/// Per-pixel minimum over two or more rasters. Nodata in any input gives
/// nodata in the output.
pub fn min_merge(inputs: &[&Raster]) -> Result<Raster> {
    if inputs.len() < 2 {
        return Err(Error::Argument(format!(
            "min_merge needs at least 2 rasters, got {}",
            inputs.len()
        )));
    }
    let first = inputs[0];
    for (i, r) in inputs.iter().enumerate().skip(1) {
        first
            .spec
            .ensure_same(&r.spec, &format!("min_merge input {i}"))?;
    }
    let nodata = first.nodata;
    let values = (0..first.values.len())
        .into_par_iter()
        .map(|i| {
            let mut m = f64::INFINITY;
            for r in inputs {
                match r.at(i) {
                    Some(v) => m = m.min(v),
                    None => return nodata,
                }
            }
            m
        })
        .collect();
    Ok(first.with_values(values))
}

/// Extrema over valid pixels.
pub fn min_max(r: &Raster) -> Result<(f64, f64)> {
    let (lo, hi) = r
        .values
        .iter()
        .filter(|&&v| v != r.nodata)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if lo > hi {
        return Err(Error::EmptyRaster);
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    Nearest,
    Mean,
}

/// Resamples onto `target`. Nearest takes the source cell containing the
/// target center; mean averages the valid source cells whose centers fall
/// inside the target cell, falling back to nearest when the target cell is
/// smaller than a source cell and contains no source center.
pub fn resample_to(src: &Raster, target: &GridSpec, method: Resample) -> Result<Raster> {
    target.validate()?;
    if !src.spec.overlaps(target) {
        return Err(Error::Extent(format!(
            "source extent [{}, {}] x [{}, {}] does not overlap target [{}, {}] x [{}, {}]",
            src.spec.x_origin,
            src.spec.x_max(),
            src.spec.y_origin,
            src.spec.y_max(),
            target.x_origin,
            target.x_max(),
            target.y_origin,
            target.y_max()
        )));
    }
    let s = &src.spec;
    let nodata = src.nodata;
    let nearest = |col: usize, row: usize| -> f64 {
        let (x, y) = target.cell_center(col, row);
        s.cell_of(x, y)
            .map(|(c, r)| src.values[s.index(c, r)])
            .unwrap_or(nodata)
    };
    let values = match method {
        Resample::Nearest => par_fill(target, nearest),
        Resample::Mean => {
            // Source column index range whose centers fall in [a, b).
            let span = |a: f64, b: f64, origin: f64, n: usize| -> (usize, usize) {
                let lo = ((a - origin) / s.cell_size - 0.5).ceil().max(0.0);
                let hi = ((b - origin) / s.cell_size - 0.5).ceil().max(0.0);
                (lo.min(n as f64) as usize, hi.min(n as f64) as usize)
            };
            par_fill(target, |col, row| {
                let x0 = target.x_origin + col as f64 * target.cell_size;
                let y0 = target.y_origin + (target.nrows - 1 - row) as f64 * target.cell_size;
                let (c0, c1) = span(x0, x0 + target.cell_size, s.x_origin, s.ncols);
                let (j0, j1) = span(y0, y0 + target.cell_size, s.y_origin, s.nrows);
                if c0 >= c1 || j0 >= j1 {
                    return nearest(col, row);
                }
                let mut sum = 0.0;
                let mut n = 0usize;
                for j in j0..j1 {
                    let r = s.nrows - 1 - j;
                    for c in c0..c1 {
                        let v = src.values[s.index(c, r)];
                        if v != nodata {
                            sum += v;
                            n += 1;
                        }
                    }
                }
                if n == 0 {
                    nodata
                } else {
                    sum / n as f64
                }
            })
        }
    };
    Ok(Raster {
        spec: *target,
        values,
        nodata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ND: f64 = DEFAULT_NODATA;

    fn spec(ncols: usize, nrows: usize) -> GridSpec {
        GridSpec::new(ncols, nrows, 0.0, 0.0, 0.5).unwrap()
    }

    fn raster(ncols: usize, nrows: usize, values: &[f64]) -> Raster {
        Raster::new(spec(ncols, nrows), values.to_vec(), ND).unwrap()
    }

    fn mask(ncols: usize, nrows: usize, values: &[f64]) -> BinaryMask {
        BinaryMask::new(raster(ncols, nrows, values)).unwrap()
    }

    #[test]
    fn gridspec_rejects_degenerate() {
        assert!(GridSpec::new(0, 1, 0.0, 0.0, 1.0).is_err());
        assert!(GridSpec::new(1, 1, 0.0, 0.0, 0.0).is_err());
        assert!(GridSpec::new(1, 1, 0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn cell_membership_is_half_open() {
        let s = GridSpec::new(4, 3, 10.0, 20.0, 1.0).unwrap();
        assert_eq!(s.cell_of(10.0, 20.0), Some((0, 2)));
        assert_eq!(s.cell_of(11.0, 20.0), Some((1, 2)));
        assert_eq!(s.cell_of(10.999, 21.0), Some((0, 1)));
        assert_eq!(s.cell_of(14.0, 20.0), None);
        assert_eq!(s.cell_of(10.0, 23.0), None);
        assert_eq!(s.cell_of(9.999, 20.5), None);
        assert_eq!(s.cell_center(0, 0), (10.5, 22.5));
    }

    #[test]
    fn raster_rejects_non_finite_and_bad_length() {
        assert!(Raster::new(spec(2, 1), vec![1.0], ND).is_err());
        assert!(Raster::new(spec(2, 1), vec![1.0, f64::NAN], ND).is_err());
        assert!(BinaryMask::new(raster(2, 1, &[1.0, 0.5])).is_err());
    }

    #[test]
    fn substitute_constant() {
        let out = substitute(
            &raster(2, 1, &[5.0, 5.0]),
            &mask(2, 1, &[1.0, 0.0]),
            Source::Constant(9.0),
        )
        .unwrap();
        assert_eq!(out.values(), &[9.0, 5.0]);
    }

    #[test]
    fn substitute_zero_mask_is_identity() {
        let base = raster(3, 1, &[1.0, ND, 3.0]);
        let out = substitute(&base, &BinaryMask::zeros(spec(3, 1)), Source::Constant(7.0)).unwrap();
        assert_eq!(out, base);
    }

    #[test]
    fn substitute_raster_source_builds_building_dem() {
        let dem = raster(3, 1, &[100.0, 100.0, 100.0]);
        let dsm = raster(3, 1, &[100.0, 130.0, 101.0]);
        let buildings = mask(3, 1, &[0.0, 1.0, 0.0]);
        let out = substitute(&dem, &buildings, Source::Raster(&dsm)).unwrap();
        assert_eq!(out.values(), &[100.0, 130.0, 100.0]);
    }

    #[test]
    fn substitute_propagates_base_nodata() {
        let out = substitute(
            &raster(2, 1, &[ND, 1.0]),
            &mask(2, 1, &[1.0, 1.0]),
            Source::Constant(4.0),
        )
        .unwrap();
        assert_eq!(out.values(), &[ND, 4.0]);
    }

    #[test]
    fn substitute_shape_mismatch() {
        let err = substitute(&raster(2, 1, &[1.0, 1.0]), &mask(1, 2, &[1.0, 1.0]), Source::Constant(0.0));
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn min_merge_basic_and_nodata() {
        let a = raster(3, 1, &[3105.0, 1.0, 5.0]);
        let b = raster(3, 1, &[678.0, 2.0, ND]);
        let c = raster(3, 1, &[2304.0, 0.5, 1.0]);
        let m = min_merge(&[&a, &b, &c]).unwrap();
        assert_eq!(m.values(), &[678.0, 0.5, ND]);
        assert_eq!(min_merge(&[&a, &a]).unwrap(), a);
    }

    #[test]
    fn min_merge_errors() {
        let a = raster(2, 1, &[1.0, 2.0]);
        assert!(matches!(min_merge(&[&a]), Err(Error::Argument(_))));
        let b = raster(1, 2, &[1.0, 2.0]);
        assert!(matches!(min_merge(&[&a, &b]), Err(Error::Shape(_))));
    }

    #[test]
    fn min_max_excludes_nodata() {
        assert_eq!(min_max(&raster(3, 1, &[1.0, ND, 7.0])).unwrap(), (1.0, 7.0));
        assert_eq!(min_max(&Raster::filled(spec(4, 4), 2.5)).unwrap(), (2.5, 2.5));
        assert!(matches!(min_max(&raster(2, 1, &[ND, ND])), Err(Error::EmptyRaster)));
    }

    #[test]
    fn resample_identity_is_bit_exact() {
        let src = Raster::new(
            GridSpec::new(3, 2, 1.25, -4.0, 0.5).unwrap(),
            vec![0.1, 0.2, ND, 1e-9, 7.7, 3.3],
            ND,
        )
        .unwrap();
        for m in [Resample::Nearest, Resample::Mean] {
            assert_eq!(resample_to(&src, src.spec(), m).unwrap(), src);
        }
    }

    #[test]
    fn resample_mean_downsamples_block() {
        let src = Raster::new(GridSpec::new(2, 2, 0.0, 0.0, 0.25).unwrap(), vec![1.0, 1.0, 3.0, 3.0], ND).unwrap();
        let out = resample_to(&src, &GridSpec::new(1, 1, 0.0, 0.0, 0.5).unwrap(), Resample::Mean).unwrap();
        assert_eq!(out.values(), &[2.0]);
    }

    #[test]
    fn resample_uncovered_is_nodata_and_disjoint_errors() {
        let src = Raster::filled(GridSpec::new(2, 2, 0.0, 0.0, 1.0).unwrap(), 4.0);
        let out = resample_to(&src, &GridSpec::new(4, 1, 1.0, 0.0, 1.0).unwrap(), Resample::Nearest).unwrap();
        assert_eq!(out.values(), &[4.0, ND, ND, ND]);
        let far = GridSpec::new(2, 2, 100.0, 100.0, 1.0).unwrap();
        assert!(matches!(resample_to(&src, &far, Resample::Mean), Err(Error::Extent(_))));
    }
}
