//! GeoJSON polygons (planar coordinates in the analysis CRS).

use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon};
use crate::zonal::{ZoneKind, ZonePolygon};

/// One polygon per Polygon/MultiPolygon feature, with its properties.
pub fn parse_features(text: &str) -> Result<Vec<(Polygon, serde_json::Map<String, Value>)>> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| Error::parse("GeoJSON", format!("line {}", e.line()), e.to_string()))?;
    let features: Vec<&Value> = match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse("GeoJSON", "root", "FeatureCollection without features"))?
            .iter()
            .collect(),
        Some("Feature") => vec![&doc],
        other => {
            return Err(Error::parse(
                "GeoJSON",
                "root",
                format!("expected FeatureCollection or Feature, got {other:?}"),
            ))
        }
    };
    let mut out = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let loc = || format!("feature {i}");
        let geom = f
            .get("geometry")
            .ok_or_else(|| Error::parse("GeoJSON", loc(), "missing geometry"))?;
        let coords = geom
            .get("coordinates")
            .ok_or_else(|| Error::parse("GeoJSON", loc(), "geometry without coordinates"))?;
        let rings: Vec<Vec<Point>> = match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => rings_of(coords).ok_or_else(|| Error::parse("GeoJSON", loc(), "bad Polygon coordinates"))?,
            Some("MultiPolygon") => coords
                .as_array()
                .and_then(|polys| {
                    polys
                        .iter()
                        .map(rings_of)
                        .collect::<Option<Vec<_>>>()
                        .map(|v| v.into_iter().flatten().collect())
                })
                .ok_or_else(|| Error::parse("GeoJSON", loc(), "bad MultiPolygon coordinates"))?,
            other => {
                return Err(Error::Capability(format!(
                    "feature {i}: geometry type {other:?}; only Polygon and MultiPolygon are supported"
                )))
            }
        };
        let props = f
            .get("properties")
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or_default();
        out.push((Polygon { rings }, props));
    }
    Ok(out)
}

fn rings_of(v: &Value) -> Option<Vec<Vec<Point>>> {
    v.as_array()?
        .iter()
        .map(|ring| {
            ring.as_array()?
                .iter()
                .map(|p| {
                    let p = p.as_array()?;
                    Some([p.first()?.as_f64()?, p.get(1)?.as_f64()?])
                })
                .collect()
        })
        .collect()
}

pub fn read_footprints(path: &Path) -> Result<Vec<Polygon>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features(&text)?
        .into_iter()
        .enumerate()
        .map(|(i, (p, _))| {
            p.validate()
                .map_err(|e| Error::Geometry(format!("footprint {i}: {e}")))?;
            Ok(p)
        })
        .collect()
}

/// Zones need an `id` (string or number) and a `kind` of `parking` or
/// `road`. A missing id falls back to the feature index.
pub fn parse_zones(text: &str) -> Result<Vec<ZonePolygon>> {
    parse_features(text)?
        .into_iter()
        .enumerate()
        .map(|(i, (polygon, props))| {
            let id = match props.get("id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => i.to_string(),
            };
            let kind: ZoneKind = props
                .get("kind")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Geometry(format!("zone '{id}' has no 'kind' property")))?
                .parse()
                .map_err(|e| Error::Geometry(format!("zone '{id}': {e}")))?;
            let zone = ZonePolygon { id, kind, polygon };
            zone.validate()?;
            Ok(zone)
        })
        .collect()
}

pub fn read_zones(path: &Path) -> Result<Vec<ZonePolygon>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_zones(&text)
}

/// FeatureCollection text for a set of polygons with string properties.
pub fn encode_features<'a, I>(features: I) -> String
where
    I: IntoIterator<Item = (&'a Polygon, Vec<(&'a str, String)>)>,
{
    let features: Vec<Value> = features
        .into_iter()
        .map(|(poly, props)| {
            let props: serde_json::Map<String, Value> =
                props.into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect();
            serde_json::json!({
                "type": "Feature",
                "properties": props,
                "geometry": { "type": "Polygon", "coordinates": poly.rings },
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "type": "FeatureCollection",
        "features": features,
    }))
    .expect("serializable")
}
