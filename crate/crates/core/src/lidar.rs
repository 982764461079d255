//! LiDAR point ingestion and DSM/DEM gridding.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{par_fill, GridSpec, Raster, DEFAULT_CELL_SIZE, DEFAULT_NODATA};

pub const CLASS_GROUND: u8 = 2;
pub const CLASS_LOW_NOISE: u8 = 7;
pub const CLASS_ROAD_SURFACE: u8 = 11;
pub const CLASS_BRIDGE_DECK: u8 = 17;
pub const CLASS_HIGH_NOISE: u8 = 18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub classification: u8,
    pub return_number: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub cell_size: f64,
    pub dem_classes: BTreeSet<u8>,
    pub noise_classes: BTreeSet<u8>,
    pub z_bounds: (f64, f64),
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            cell_size: DEFAULT_CELL_SIZE,
            dem_classes: [CLASS_GROUND, CLASS_ROAD_SURFACE, CLASS_BRIDGE_DECK].into(),
            noise_classes: [CLASS_LOW_NOISE, CLASS_HIGH_NOISE].into(),
            z_bounds: (-500.0, 9000.0),
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) {
            return Err(Error::Config(format!("cell_size must be > 0, got {}", self.cell_size)));
        }
        if !(self.z_bounds.0 < self.z_bounds.1) {
            return Err(Error::Config(format!(
                "z bounds must satisfy min < max, got ({}, {})",
                self.z_bounds.0, self.z_bounds.1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    Las,
    XyzText,
}

impl PointFormat {
    /// `.las` is LAS, anything else is treated as xyz text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("las") => PointFormat::Las,
            _ => PointFormat::XyzText,
        }
    }
}

pub fn read_points(path: &Path, format: PointFormat) -> Result<Vec<PointRecord>> {
    match format {
        PointFormat::Las => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_las(&bytes)
        }
        PointFormat::XyzText => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_xyz(&text)
        }
    }
}

/// Whitespace-separated `x y z classification return_number`, one point per
/// line. Blank lines and lines starting with `#` are skipped.
pub fn parse_xyz(text: &str) -> Result<Vec<PointRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = || format!("line {}", lineno + 1);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                "xyz points",
                loc(),
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse("xyz points", loc(), format!("bad number '{}'", fields[i])))
        };
        let int = |i: usize| -> Result<u8> {
            fields[i]
                .parse::<u8>()
                .map_err(|_| Error::parse("xyz points", loc(), format!("bad integer '{}'", fields[i])))
        };
        let return_number = int(4)?;
        if return_number == 0 {
            return Err(Error::parse("xyz points", loc(), "return number must be >= 1"));
        }
        out.push(PointRecord {
            x: num(0)?,
            y: num(1)?,
            z: num(2)?,
            classification: int(3)?,
            return_number,
        });
    }
    Ok(out)
}

// LAS public header offsets (identical for 1.2 through 1.4).
const LAS_VERSION_MAJOR: usize = 24;
const LAS_VERSION_MINOR: usize = 25;
const LAS_HEADER_SIZE: usize = 94;
const LAS_POINT_OFFSET: usize = 96;
const LAS_POINT_FORMAT: usize = 104;
const LAS_RECORD_LEN: usize = 105;
const LAS_LEGACY_COUNT: usize = 107;
const LAS_SCALE: usize = 131;
const LAS_OFFSET: usize = 155;
const LAS_MIN_MAX: usize = 179;
const LAS14_COUNT: usize = 247;
const LAS12_HEADER_LEN: usize = 227;

fn min_record_len(format: u8) -> usize {
    match format {
        0 => 20,
        1 => 28,
        2 => 26,
        _ => 34,
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&self, at: usize, what: &str) -> Result<[u8; N]> {
        self.bytes
            .get(at..at + N)
            .map(|s| s.try_into().unwrap())
            .ok_or_else(|| {
                Error::parse(
                    "LAS",
                    format!("byte {at}"),
                    format!("file truncated while reading {what} ({} bytes total)", self.bytes.len()),
                )
            })
    }
    fn u8(&self, at: usize, what: &str) -> Result<u8> {
        Ok(self.take::<1>(at, what)?[0])
    }
    fn u16(&self, at: usize, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(at, what)?))
    }
    fn u32(&self, at: usize, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(at, what)?))
    }
    fn i32(&self, at: usize, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(at, what)?))
    }
    fn u64(&self, at: usize, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(at, what)?))
    }
    fn f64(&self, at: usize, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(at, what)?))
    }
}

/// Parses LAS 1.2-1.4 with point data formats 0-3. Only coordinates,
/// return number and classification are read.
pub fn parse_las(bytes: &[u8]) -> Result<Vec<PointRecord>> {
    let c = Cursor { bytes };
    let sig = c.take::<4>(0, "file signature")?;
    if &sig != b"LASF" {
        return Err(Error::parse("LAS", "byte 0", "missing LASF signature"));
    }
    let major = c.u8(LAS_VERSION_MAJOR, "version major")?;
    let minor = c.u8(LAS_VERSION_MINOR, "version minor")?;
    if major != 1 || !(2..=4).contains(&minor) {
        return Err(Error::Capability(format!("LAS version {major}.{minor}")));
    }
    let header_size = c.u16(LAS_HEADER_SIZE, "header size")? as usize;
    if header_size < LAS12_HEADER_LEN {
        return Err(Error::parse(
            "LAS",
            format!("byte {LAS_HEADER_SIZE}"),
            format!("header size {header_size} smaller than {LAS12_HEADER_LEN}"),
        ));
    }
    let point_offset = c.u32(LAS_POINT_OFFSET, "offset to point data")? as usize;
    if point_offset < header_size {
        return Err(Error::parse(
            "LAS",
            format!("byte {LAS_POINT_OFFSET}"),
            format!("point data offset {point_offset} inside the {header_size}-byte header"),
        ));
    }
    let raw_format = c.u8(LAS_POINT_FORMAT, "point data format")?;
    if raw_format & 0xC0 != 0 {
        return Err(Error::Capability(format!(
            "compressed LAS point data format {raw_format} (LAZ)"
        )));
    }
    if raw_format > 3 {
        return Err(Error::Capability(format!("LAS point data format {raw_format}")));
    }
    let record_len = c.u16(LAS_RECORD_LEN, "point record length")? as usize;
    if record_len < min_record_len(raw_format) {
        return Err(Error::parse(
            "LAS",
            format!("byte {LAS_RECORD_LEN}"),
            format!(
                "record length {record_len} too short for point format {raw_format}"
            ),
        ));
    }
    let mut count = c.u32(LAS_LEGACY_COUNT, "point count")? as u64;
    if minor >= 4 && header_size >= LAS14_COUNT + 8 {
        let extended = c.u64(LAS14_COUNT, "extended point count")?;
        if count == 0 {
            count = extended;
        }
    }
    let scale = [
        c.f64(LAS_SCALE, "x scale")?,
        c.f64(LAS_SCALE + 8, "y scale")?,
        c.f64(LAS_SCALE + 16, "z scale")?,
    ];
    let offset = [
        c.f64(LAS_OFFSET, "x offset")?,
        c.f64(LAS_OFFSET + 8, "y offset")?,
        c.f64(LAS_OFFSET + 16, "z offset")?,
    ];
    if scale.iter().chain(&offset).any(|v| !v.is_finite()) || scale.contains(&0.0) {
        return Err(Error::parse("LAS", format!("byte {LAS_SCALE}"), "invalid scale or offset"));
    }
    let needed = point_offset as u64 + count * record_len as u64;
    if needed > bytes.len() as u64 {
        return Err(Error::parse(
            "LAS",
            format!("byte {}", bytes.len()),
            format!("header declares {count} points needing {needed} bytes"),
        ));
    }
    let mut out = Vec::with_capacity(count as usize);
    for i in 0..count as usize {
        let at = point_offset + i * record_len;
        let xi = c.i32(at, "point x")?;
        let yi = c.i32(at + 4, "point y")?;
        let zi = c.i32(at + 8, "point z")?;
        let flags = c.u8(at + 14, "return flags")?;
        let class = c.u8(at + 15, "classification")?;
        out.push(PointRecord {
            x: xi as f64 * scale[0] + offset[0],
            y: yi as f64 * scale[1] + offset[1],
            z: zi as f64 * scale[2] + offset[2],
            classification: class & 0x1F,
            return_number: (flags & 0x07).max(1),
        });
    }
    Ok(out)
}

/// Writes a LAS 1.2 point format 0 file. Used for fixtures and for
/// exporting filtered clouds.
pub fn write_las(path: &Path, points: &[PointRecord], scale: f64) -> Result<()> {
    let bytes = encode_las(points, scale)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_las(points: &[PointRecord], scale: f64) -> Result<Vec<u8>> {
    if !(scale > 0.0) {
        return Err(Error::Argument(format!("LAS scale must be > 0, got {scale}")));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for (k, v) in [p.x, p.y, p.z].into_iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    if points.is_empty() {
        lo = [0.0; 3];
        hi = [0.0; 3];
    }
    let offset = lo.map(|v| (v / scale).floor() * scale);
    let mut h = vec![0u8; LAS12_HEADER_LEN];
    h[0..4].copy_from_slice(b"LASF");
    h[LAS_VERSION_MAJOR] = 1;
    h[LAS_VERSION_MINOR] = 2;
    h[LAS_HEADER_SIZE..LAS_HEADER_SIZE + 2].copy_from_slice(&(LAS12_HEADER_LEN as u16).to_le_bytes());
    h[LAS_POINT_OFFSET..LAS_POINT_OFFSET + 4].copy_from_slice(&(LAS12_HEADER_LEN as u32).to_le_bytes());
    h[LAS_POINT_FORMAT] = 0;
    h[LAS_RECORD_LEN..LAS_RECORD_LEN + 2].copy_from_slice(&20u16.to_le_bytes());
    h[LAS_LEGACY_COUNT..LAS_LEGACY_COUNT + 4].copy_from_slice(&(points.len() as u32).to_le_bytes());
    for k in 0..3 {
        h[LAS_SCALE + 8 * k..LAS_SCALE + 8 * k + 8].copy_from_slice(&scale.to_le_bytes());
        h[LAS_OFFSET + 8 * k..LAS_OFFSET + 8 * k + 8].copy_from_slice(&offset[k].to_le_bytes());
        // max x, min x, max y, min y, max z, min z
        let at = LAS_MIN_MAX + 16 * k;
        h[at..at + 8].copy_from_slice(&hi[k].to_le_bytes());
        h[at + 8..at + 16].copy_from_slice(&lo[k].to_le_bytes());
    }
    let mut out = h;
    out.reserve(points.len() * 20);
    for p in points {
        for (k, v) in [p.x, p.y, p.z].into_iter().enumerate() {
            let raw = ((v - offset[k]) / scale).round();
            if raw < i32::MIN as f64 || raw > i32::MAX as f64 {
                return Err(Error::Argument(format!(
                    "coordinate {v} not representable at scale {scale}"
                )));
            }
            out.extend_from_slice(&(raw as i32).to_le_bytes());
        }
        out.extend_from_slice(&0u16.to_le_bytes()); // intensity
        let ret = p.return_number.clamp(1, 7);
        out.push(ret | (ret.max(1) << 3)); // return number, number of returns
        out.push(p.classification & 0x1F);
        out.push(0); // scan angle
        out.push(0); // user data
        out.extend_from_slice(&0u16.to_le_bytes()); // point source id
    }
    Ok(out)
}

pub fn filter_noise(points: &[PointRecord], cfg: &IngestConfig) -> Vec<PointRecord> {
    points
        .iter()
        .filter(|p| {
            !cfg.noise_classes.contains(&p.classification)
                && p.z >= cfg.z_bounds.0
                && p.z <= cfg.z_bounds.1
        })
        .copied()
        .collect()
}

fn grid_reduce<'a, I, F>(points: I, spec: &GridSpec, better: F) -> Raster
where
    I: IntoIterator<Item = &'a PointRecord>,
    F: Fn(f64, f64) -> bool,
{
    let mut values = vec![f64::NAN; spec.len()];
    for p in points {
        if let Some((c, r)) = spec.cell_of(p.x, p.y) {
            let v = &mut values[spec.index(c, r)];
            if v.is_nan() || better(p.z, *v) {
                *v = p.z;
            }
        }
    }
    for v in &mut values {
        if v.is_nan() {
            *v = DEFAULT_NODATA;
        }
    }
    Raster::new(*spec, values, DEFAULT_NODATA).expect("gridded values are finite")
}

/// Highest first return per cell.
pub fn grid_dsm(points: &[PointRecord], spec: &GridSpec) -> Raster {
    grid_reduce(points.iter().filter(|p| p.return_number == 1), spec, |a, b| a > b)
}

/// Lowest ground-like return per cell.
pub fn grid_dem(points: &[PointRecord], spec: &GridSpec, cfg: &IngestConfig) -> Raster {
    grid_reduce(
        points
            .iter()
            .filter(|p| cfg.dem_classes.contains(&p.classification)),
        spec,
        |a, b| a < b,
    )
}

/// Grid covering the points' bounding box, snapped to multiples of the
/// cell size.
pub fn spec_for_points(points: &[PointRecord], cell_size: f64) -> Result<GridSpec> {
    if points.is_empty() {
        return Err(Error::Argument("cannot derive a grid from zero points".into()));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for p in points {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let x0 = (x0 / cell_size).floor() * cell_size;
    let y0 = (y0 / cell_size).floor() * cell_size;
    let ncols = ((x1 - x0) / cell_size).floor() as usize + 1;
    let nrows = ((y1 - y0) / cell_size).floor() as usize + 1;
    GridSpec::new(ncols, nrows, x0, y0, cell_size)
}

/// Fills each nodata pixel from its nearest valid pixel within
/// `max_radius_cells` (Euclidean, in cells). Ties go to the smallest row,
/// then the smallest column. Only originally valid pixels act as sources.
pub fn fill_voids(r: &Raster, max_radius_cells: usize) -> Result<Raster> {
    if max_radius_cells == 0 {
        return Err(Error::Argument("fill radius must be >= 1".into()));
    }
    let spec = *r.spec();
    let rad = max_radius_cells as isize;
    let r2max = rad * rad;
    let nodata = r.nodata();
    let values = par_fill(&spec, |col, row| {
        if let Some(v) = r.get(col, row) {
            return v;
        }
        let mut best: Option<(isize, usize, usize)> = None;
        let (c, rw) = (col as isize, row as isize);
        for dr in -rad..=rad {
            let nr = rw + dr;
            if nr < 0 || nr >= spec.nrows as isize {
                continue;
            }
            for dc in -rad..=rad {
                let nc = c + dc;
                if nc < 0 || nc >= spec.ncols as isize {
                    continue;
                }
                let d2 = dr * dr + dc * dc;
                if d2 > r2max || r.get(nc as usize, nr as usize).is_none() {
                    continue;
                }
                // scan order is (row, col) ascending, so strict < keeps the
                // earliest tie
                if best.is_none_or(|(bd, _, _)| d2 < bd) {
                    best = Some((d2, nc as usize, nr as usize));
                }
            }
        }
        best.and_then(|(_, bc, br)| r.get(bc, br)).unwrap_or(nodata)
    });
    Ok(r.with_values(values))
}
