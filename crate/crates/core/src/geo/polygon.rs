use std::path::Path;

use serde_json::Value;

use super::GeoPoint;
use crate::error::{Error, Result};

/// A named polygon made of one or more closed rings, evaluated with the
/// even-odd rule. Outer rings are stored counter-clockwise and holes
/// clockwise so that signed areas add up.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPolygon {
    pub name: String,
    pub rings: Vec<Vec<GeoPoint>>,
}

/// Shoelace area on the (lon, lat) plane; positive when counter-clockwise.
pub fn ring_signed_area(ring: &[GeoPoint]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, a) in ring.iter().enumerate() {
        let b = &ring[(i + 1) % ring.len()];
        acc += a.lon * b.lat - b.lon * a.lat;
    }
    acc / 2.0
}

fn on_segment(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> bool {
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    let scale = (b.lon - a.lon).abs() + (b.lat - a.lat).abs();
    if cross.abs() > 1e-12 * scale.max(1e-300) {
        return false;
    }
    p.lon >= a.lon.min(b.lon) && p.lon <= a.lon.max(b.lon) && p.lat >= a.lat.min(b.lat) && p.lat <= a.lat.max(b.lat)
}

fn segments_cross(a: &GeoPoint, b: &GeoPoint, c: &GeoPoint, d: &GeoPoint) -> bool {
    let orient = |p: &GeoPoint, q: &GeoPoint, r: &GeoPoint| {
        let v = (q.lon - p.lon) * (r.lat - p.lat) - (q.lat - p.lat) * (r.lon - p.lon);
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    };
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 {
        return true;
    }
    (o1 == 0 && on_segment(c, a, b))
        || (o2 == 0 && on_segment(d, a, b))
        || (o3 == 0 && on_segment(a, c, d))
        || (o4 == 0 && on_segment(b, c, d))
}

/// Even-odd crossing test for a single closed ring (closing point included).
fn ring_crossings(ring: &[GeoPoint], p: &GeoPoint) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    inside
}

impl BoundaryPolygon {
    /// Validates and normalizes ring orientation by nesting depth.
    pub fn new(name: impl Into<String>, rings: Vec<Vec<GeoPoint>>) -> Result<Self> {
        let name = name.into();
        if rings.is_empty() {
            return Err(Error::validation(format!("polygon {name:?} has no rings")));
        }
        for (ri, ring) in rings.iter().enumerate() {
            if ring.len() < 4 {
                return Err(Error::validation(format!(
                    "polygon {name:?} ring {ri} has {} points (need >= 4)",
                    ring.len()
                )));
            }
            if ring.first() != ring.last() {
                return Err(Error::validation(format!("polygon {name:?} ring {ri} is not closed")));
            }
            let n = ring.len() - 1;
            for i in 0..n {
                for j in (i + 1)..n {
                    let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                    if adjacent {
                        continue;
                    }
                    if segments_cross(&ring[i], &ring[i + 1], &ring[j], &ring[j + 1]) {
                        return Err(Error::validation(format!(
                            "polygon {name:?} ring {ri} self-intersects at edges {i} and {j}"
                        )));
                    }
                }
            }
        }
        let mut out = rings.clone();
        for (ri, ring) in out.iter_mut().enumerate() {
            let depth = rings
                .iter()
                .enumerate()
                .filter(|(oi, other)| *oi != ri && ring_crossings(other, &ring[0]))
                .count();
            let want_ccw = depth % 2 == 0;
            if (ring_signed_area(&ring[..ring.len() - 1]) > 0.0) != want_ccw {
                ring.reverse();
            }
        }
        Ok(BoundaryPolygon { name, rings: out })
    }

    /// Axis-aligned rectangle, mostly for tests and synthetic scenarios.
    pub fn rectangle(name: impl Into<String>, min: GeoPoint, max: GeoPoint) -> Result<Self> {
        let ring = vec![
            GeoPoint { lat: min.lat, lon: min.lon },
            GeoPoint { lat: min.lat, lon: max.lon },
            GeoPoint { lat: max.lat, lon: max.lon },
            GeoPoint { lat: max.lat, lon: min.lon },
            GeoPoint { lat: min.lat, lon: min.lon },
        ];
        Self::new(name, vec![ring])
    }

    /// Even-odd ray casting. Points lying on an edge count as inside.
    pub fn contains(&self, p: &GeoPoint) -> bool {
        for ring in &self.rings {
            for w in ring.windows(2) {
                if on_segment(p, &w[0], &w[1]) {
                    return true;
                }
            }
        }
        self.rings.iter().filter(|r| ring_crossings(r, p)).count() % 2 == 1
    }

    pub fn area(&self) -> f64 {
        self.rings.iter().map(|r| ring_signed_area(&r[..r.len() - 1])).sum()
    }

    /// (min, max) corners of the bounding box.
    pub fn bbox(&self) -> (GeoPoint, GeoPoint) {
        let mut min = GeoPoint { lat: f64::INFINITY, lon: f64::INFINITY };
        let mut max = GeoPoint { lat: f64::NEG_INFINITY, lon: f64::NEG_INFINITY };
        for p in self.rings.iter().flatten() {
            min.lat = min.lat.min(p.lat);
            min.lon = min.lon.min(p.lon);
            max.lat = max.lat.max(p.lat);
            max.lon = max.lon.max(p.lon);
        }
        (min, max)
    }

    pub fn to_geojson_coordinates(&self) -> Value {
        Value::Array(
            self.rings
                .iter()
                .map(|ring| Value::Array(ring.iter().map(|p| serde_json::json!([p.lon, p.lat])).collect()))
                .collect(),
        )
    }
}

fn parse_ring(v: &Value) -> Option<Vec<GeoPoint>> {
    v.as_array()?
        .iter()
        .map(|c| {
            let c = c.as_array()?;
            let lon = c.first()?.as_f64()?;
            let lat = c.get(1)?.as_f64()?;
            GeoPoint::new(lat, lon).ok()
        })
        .collect()
}

fn rings_of(geometry: &Value) -> Option<Vec<Vec<GeoPoint>>> {
    let coords = geometry.get("coordinates")?;
    match geometry.get("type")?.as_str()? {
        "Polygon" => coords.as_array()?.iter().map(parse_ring).collect(),
        "MultiPolygon" => {
            let mut rings = Vec::new();
            for poly in coords.as_array()? {
                for ring in poly.as_array()? {
                    rings.push(parse_ring(ring)?);
                }
            }
            Some(rings)
        }
        _ => None,
    }
}

/// Loads named polygons from a GeoJSON `FeatureCollection` (or single
/// `Feature`). Each feature must carry a string `name` property and a
/// `Polygon` or `MultiPolygon` geometry.
pub fn load_boundaries(path: &Path) -> Result<Vec<BoundaryPolygon>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text)?;
    let features: Vec<&Value> = match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .map(|f| f.iter().collect())
            .unwrap_or_default(),
        Some("Feature") => vec![&doc],
        _ => {
            return Err(Error::Corrupt {
                path: path.into(),
                message: "expected a GeoJSON Feature or FeatureCollection".into(),
            })
        }
    };
    let mut out = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let name = f
            .pointer("/properties/name")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Corrupt {
                path: path.into(),
                message: format!("feature {i} lacks a string `name` property"),
            })?;
        let rings = f.get("geometry").and_then(rings_of).ok_or_else(|| Error::Corrupt {
            path: path.into(),
            message: format!("feature {name:?} lacks a Polygon/MultiPolygon geometry"),
        })?;
        out.push(BoundaryPolygon::new(name, rings)?);
    }
    Ok(out)
}
