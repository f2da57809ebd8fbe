//! Minimal GeoJSON output and a structural checker for the files we emit.
//!
//! Property maps are `serde_json::Map`, which keeps keys sorted, so output
//! is byte-stable for equal inputs.

use std::path::Path;

use serde_json::{json, Map, Value};

use super::{ring_signed_area, BoundaryPolygon, GeoPoint};
use crate::error::{Error, Result};

pub type Properties = Map<String, Value>;

fn position(p: &GeoPoint) -> Value {
    json!([p.lon, p.lat])
}

fn ring_value(ring: &[GeoPoint]) -> Value {
    Value::Array(ring.iter().map(position).collect())
}

pub fn point_feature(p: &GeoPoint, properties: Properties) -> Value {
    json!({
        "type": "Feature",
        "geometry": { "type": "Point", "coordinates": position(p) },
        "properties": properties,
    })
}

/// Groups closed rings into a `MultiPolygon`: every counter-clockwise ring
/// starts a polygon and each clockwise ring becomes a hole of the smallest
/// outer ring containing it. An empty ring list gives an empty geometry.
pub fn polygon_geometry(rings: &[Vec<GeoPoint>]) -> Value {
    let area = |r: &Vec<GeoPoint>| ring_signed_area(&r[..r.len() - 1]);
    let outers: Vec<&Vec<GeoPoint>> = rings.iter().filter(|r| area(r) > 0.0).collect();
    let mut polys: Vec<Vec<Value>> = outers.iter().map(|r| vec![ring_value(r)]).collect();
    for hole in rings.iter().filter(|r| area(r) <= 0.0) {
        let probe = hole[0];
        let host = outers
            .iter()
            .enumerate()
            .filter(|(_, o)| {
                BoundaryPolygon {
                    name: String::new(),
                    rings: vec![(**o).clone()],
                }
                .contains(&probe)
            })
            .min_by(|a, b| area(a.1).total_cmp(&area(b.1)))
            .map(|(i, _)| i);
        match host {
            Some(i) => polys[i].push(ring_value(hole)),
            None => log::warn!("dropping a hole ring with no enclosing outer ring"),
        }
    }
    json!({ "type": "MultiPolygon", "coordinates": polys })
}

pub fn polygon_feature(rings: &[Vec<GeoPoint>], properties: Properties) -> Value {
    json!({
        "type": "Feature",
        "geometry": polygon_geometry(rings),
        "properties": properties,
    })
}

pub fn feature_collection(features: Vec<Value>) -> Value {
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn write_geojson(path: &Path, doc: &Value) -> Result<()> {
    let mut text = serde_json::to_string(doc)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_position(v: &Value) -> Option<(f64, f64)> {
    let a = v.as_array()?;
    if a.len() < 2 {
        return None;
    }
    let (x, y) = (a[0].as_f64()?, a[1].as_f64()?);
    (x.is_finite() && y.is_finite()).then_some((x, y))
}

fn check_ring(v: &Value) -> std::result::Result<(), String> {
    let pts: Vec<(f64, f64)> = v
        .as_array()
        .ok_or("ring is not an array")?
        .iter()
        .map(check_position)
        .collect::<Option<_>>()
        .ok_or("bad position in ring")?;
    if pts.len() < 4 {
        return Err(format!("ring has {} positions, need >= 4", pts.len()));
    }
    if pts.first() != pts.last() {
        return Err("ring is not closed".into());
    }
    Ok(())
}

fn check_geometry(g: &Value) -> std::result::Result<(), String> {
    let coords = g.get("coordinates").ok_or("geometry lacks coordinates")?;
    match g.get("type").and_then(Value::as_str) {
        Some("Point") => check_position(coords).map(|_| ()).ok_or_else(|| "bad point".into()),
        Some("Polygon") => coords.as_array().ok_or("bad polygon")?.iter().try_for_each(check_ring),
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or("bad multipolygon")?
            .iter()
            .try_for_each(|p| p.as_array().ok_or("bad polygon")?.iter().try_for_each(check_ring)),
        other => Err(format!("unsupported geometry type {other:?}")),
    }
}

/// Checks that `doc` is a FeatureCollection whose geometries are well formed
/// (finite positions, closed rings) and whose features all carry `required`
/// properties. Returns the feature count.
pub fn check_feature_collection(doc: &Value, required: &[&str]) -> std::result::Result<usize, String> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err("not a FeatureCollection".into());
    }
    let features = doc.get("features").and_then(Value::as_array).ok_or("missing features")?;
    for (i, f) in features.iter().enumerate() {
        if f.get("type").and_then(Value::as_str) != Some("Feature") {
            return Err(format!("feature {i}: not a Feature"));
        }
        check_geometry(f.get("geometry").ok_or(format!("feature {i}: no geometry"))?).map_err(|e| format!("feature {i}: {e}"))?;
        let props = f.get("properties").and_then(Value::as_object).ok_or(format!("feature {i}: no properties"))?;
        if let Some(k) = required.iter().find(|k| !props.contains_key(**k)) {
            return Err(format!("feature {i}: missing property {k:?}"));
        }
    }
    Ok(features.len())
}
