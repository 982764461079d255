//! Per-polygon mean solar potential over parking lots and roads.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{for_each_cell_inside, Polygon};
use crate::raster::{GridSpec, Raster, DEFAULT_NODATA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneKind {
    Parking,
    Road,
}

impl ZoneKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ZoneKind::Parking => "parking",
            ZoneKind::Road => "road",
        }
    }
}

impl std::str::FromStr for ZoneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parking" | "parking_lot" | "parking-lot" => Ok(ZoneKind::Parking),
            "road" | "roads" => Ok(ZoneKind::Road),
            _ => Err(Error::Geometry(format!("unknown zone kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZonePolygon {
    pub id: String,
    pub kind: ZoneKind,
    pub polygon: Polygon,
}

impl ZonePolygon {
    pub fn validate(&self) -> Result<()> {
        self.polygon
            .validate()
            .map_err(|e| Error::Geometry(format!("zone '{}': {e}", self.id)))?;
        if !self.polygon.is_closed() {
            return Err(Error::Geometry(format!("zone '{}' has an unclosed ring", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneLabels {
    /// Zone index per pixel, nodata outside every zone.
    pub labels: Raster,
    /// Pixels claimed by more than one zone.
    pub overlap_pixels: usize,
}

/// Labels each pixel with the index of the zone containing its center.
/// Where zones overlap, the later zone wins.
pub fn rasterize_zones(zones: &[ZonePolygon], spec: &GridSpec) -> Result<ZoneLabels> {
    let mut values = vec![DEFAULT_NODATA; spec.len()];
    let mut overlap_pixels = 0;
    for (i, z) in zones.iter().enumerate() {
        z.validate()?;
        for_each_cell_inside(&z.polygon, spec, |c, r| {
            let v = &mut values[spec.index(c, r)];
            if *v != DEFAULT_NODATA {
                overlap_pixels += 1;
            }
            *v = i as f64;
        });
    }
    if overlap_pixels > 0 {
        log::warn!("{overlap_pixels} pixels fall in more than one zone; later zones take them");
    }
    Ok(ZoneLabels {
        labels: Raster::new(*spec, values, DEFAULT_NODATA)?,
        overlap_pixels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonalRow {
    pub id: String,
    pub kind: ZoneKind,
    pub leaf_on_mean: Option<f64>,
    pub leaf_off_mean: Option<f64>,
    pub pixel_count: usize,
}

pub fn zonal_means(leaf_on: &Raster, leaf_off: &Raster, labels: &Raster, zones: &[ZonePolygon]) -> Result<Vec<ZonalRow>> {
    labels.spec().ensure_same(leaf_on.spec(), "zonal leaf-on")?;
    labels.spec().ensure_same(leaf_off.spec(), "zonal leaf-off")?;
    #[derive(Default, Clone, Copy)]
    struct Acc {
        count: usize,
        on_sum: f64,
        on_n: usize,
        off_sum: f64,
        off_n: usize,
    }
    let mut acc = vec![Acc::default(); zones.len()];
    for i in 0..labels.spec().len() {
        let Some(label) = labels.at(i) else { continue };
        let Some(a) = acc.get_mut(label as usize) else { continue };
        a.count += 1;
        if let Some(v) = leaf_on.at(i) {
            a.on_sum += v;
            a.on_n += 1;
        }
        if let Some(v) = leaf_off.at(i) {
            a.off_sum += v;
            a.off_n += 1;
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    Ok(zones
        .iter()
        .zip(&acc)
        .map(|(z, a)| ZonalRow {
            id: z.id.clone(),
            kind: z.kind,
            leaf_on_mean: mean(a.on_sum, a.on_n),
            leaf_off_mean: mean(a.off_sum, a.off_n),
            pixel_count: a.count,
        })
        .collect())
}

pub const CSV_HEADER: [&str; 5] = [
    "id",
    "kind",
    "leaf_on_mean_whm2day",
    "leaf_off_mean_whm2day",
    "pixel_count",
];

/// CSV with two-decimal means; zones without pixels get empty means.
pub fn write_csv<W: Write>(rows: &[ZonalRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let to_io = |e: csv::Error| Error::io("zonal csv", std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(to_io)?;
    let fmt = |m: Option<f64>| m.map(|v| format!("{v:.2}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.id.clone(),
            r.kind.as_str().to_string(),
            fmt(r.leaf_on_mean),
            fmt(r.leaf_off_mean),
            r.pixel_count.to_string(),
        ])
        .map_err(to_io)?;
    }
    w.flush().map_err(|e| Error::io("zonal csv", e))
}
