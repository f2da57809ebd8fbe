//! Average travel cost from each resident to the nearest facility.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::ResidentialRegion;
use crate::costmatrix::{CostKind, CostMatrix};
use crate::error::{Error, Result};
use crate::geo::{BoundaryPolygon, GeoPoint};

/// A named facility set, as region indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub open: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub label: String,
    pub facilities: usize,
    /// Weighted mean distance to the distance-nearest facility.
    pub avg_distance_km: f64,
    /// Weighted mean duration to the duration-nearest facility.
    pub avg_duration_min: f64,
    /// Duration to the facility that is nearest by distance.
    pub avg_duration_min_at_distance_nearest: f64,
    /// Distance to the facility that is nearest by duration.
    pub avg_distance_km_at_duration_nearest: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessReport {
    pub total_weight: f64,
    pub rows: Vec<ScenarioRow>,
}

/// Index of the open facility with the smallest cost from `i`. A region
/// hosting a facility uses it; other ties go to the lowest index.
fn nearest(costs: &CostMatrix, i: usize, open: &[usize]) -> usize {
    if open.contains(&i) {
        return i;
    }
    let mut best = open[0];
    for &j in &open[1..] {
        if costs.get(i, j) < costs.get(i, best) || (costs.get(i, j) == costs.get(i, best) && j < best) {
            best = j;
        }
    }
    best
}

pub fn access_report(regions: &[ResidentialRegion], scenarios: &[Scenario], d: &CostMatrix, t: &CostMatrix) -> Result<AccessReport> {
    let weights: Vec<f64> = regions.iter().map(|r| r.weight).collect();
    access_report_weighted(&weights, scenarios, d, t)
}

/// [`access_report`] over bare region weights.
pub fn access_report_weighted(weights: &[f64], scenarios: &[Scenario], d: &CostMatrix, t: &CostMatrix) -> Result<AccessReport> {
    let n = weights.len();
    d.expect_dim(n)?;
    t.expect_dim(n)?;
    if d.kind != CostKind::DistanceM || t.kind != CostKind::DurationS {
        return Err(Error::validation("expected a distance matrix and a duration matrix"));
    }
    let total_weight: f64 = weights.iter().sum();
    if !(total_weight > 0.0) {
        return Err(Error::validation("total region weight must be positive"));
    }
    let mut rows = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        if s.open.is_empty() {
            return Err(Error::validation(format!("scenario {:?} has no facilities", s.label)));
        }
        if let Some(j) = s.open.iter().find(|&&j| j >= n) {
            return Err(Error::validation(format!("scenario {:?} opens region {j}, only {n} exist", s.label)));
        }
        let mut open = s.open.clone();
        open.sort_unstable();
        open.dedup();
        let (mut dd, mut tt, mut dt, mut td) = (0.0, 0.0, 0.0, 0.0);
        for (i, &w) in weights.iter().enumerate() {
            let jd = nearest(d, i, &open);
            let jt = nearest(t, i, &open);
            dd += w * d.get(i, jd);
            tt += w * t.get(i, jt);
            dt += w * t.get(i, jd);
            td += w * d.get(i, jt);
        }
        rows.push(ScenarioRow {
            label: s.label.clone(),
            facilities: open.len(),
            avg_distance_km: dd / total_weight / 1000.0,
            avg_duration_min: tt / total_weight / 60.0,
            avg_duration_min_at_distance_nearest: dt / total_weight / 60.0,
            avg_distance_km_at_duration_nearest: td / total_weight / 1000.0,
        });
    }
    Ok(AccessReport { total_weight, rows })
}

fn table(head: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = head.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut parts = Vec::new();
        for (k, c) in cells.enumerate() {
            parts.push(if k == 0 {
                format!("{c:<w$}", w = width[k])
            } else {
                format!("{c:>w$}", w = width[k])
            });
        }
        let _ = writeln!(out, "{}", parts.join("  "));
    };
    line(&mut head.iter().copied());
    for r in rows {
        line(&mut r.iter().map(String::as_str));
    }
    out
}

impl AccessReport {
    /// Aligned plain-text table: km to one decimal, minutes to integers.
    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.label.clone(), format!("{:.1}", r.avg_distance_km), format!("{:.0}", r.avg_duration_min)])
            .collect();
        table(&["Scenario", "Distance (km)", "Duration (min)"], &rows)
    }

    /// Cross columns: each cost measured at the facility nearest by the other.
    pub fn supplementary_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.label.clone(),
                    format!("{:.0}", r.avg_duration_min_at_distance_nearest),
                    format!("{:.1}", r.avg_distance_km_at_duration_nearest),
                ]
            })
            .collect();
        table(&["Scenario", "Duration via distance-nearest (min)", "Distance via duration-nearest (km)"], &rows)
    }

    /// One CSV row per scenario at full precision.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "label",
            "facilities",
            "avg_distance_km",
            "avg_duration_min",
            "avg_duration_min_at_distance_nearest",
            "avg_distance_km_at_duration_nearest",
            "total_weight",
        ])?;
        for r in &self.rows {
            wr.write_record([
                r.label.clone(),
                r.facilities.to_string(),
                r.avg_distance_km.to_string(),
                r.avg_duration_min.to_string(),
                r.avg_duration_min_at_distance_nearest.to_string(),
                r.avg_distance_km_at_duration_nearest.to_string(),
                self.total_weight.to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPoint {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

impl NamedPoint {
    pub fn point(&self) -> Result<GeoPoint> {
        GeoPoint::new(self.lat, self.lon)
    }
}

/// Reads `name,lat,lon` rows.
pub fn read_facilities(path: &Path) -> Result<Vec<NamedPoint>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rd.deserialize::<NamedPoint>().enumerate() {
        let p = rec?;
        p.point().map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 2,
            message: e.to_string(),
        })?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("no facilities in {}", path.display())));
    }
    Ok(out)
}

pub fn write_facilities(points: &[NamedPoint], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in points {
        wr.serialize(p)?;
    }
    wr.flush().map_err(|e| Error::io("<facilities>", e))?;
    Ok(())
}

/// Maps each facility to the region with the nearest center. Facilities
/// outside `boundary` are mapped anyway, with a warning.
pub fn map_current_facilities(
    points: &[GeoPoint],
    regions: &[ResidentialRegion],
    boundary: Option<&BoundaryPolygon>,
) -> Result<BTreeSet<usize>> {
    if regions.is_empty() {
        return Err(Error::Empty("no regions".into()));
    }
    let mut out = BTreeSet::new();
    for p in points {
        if let Some(b) = boundary {
            if !b.contains(p) {
                log::warn!("facility at ({}, {}) lies outside the study boundary", p.lat, p.lon);
            }
        }
        let mut best = 0;
        for (j, r) in regions.iter().enumerate().skip(1) {
            if p.planar_dist2(&r.center) < p.planar_dist2(&regions[best].center) {
                best = j;
            }
        }
        out.insert(best);
    }
    Ok(out)
}
