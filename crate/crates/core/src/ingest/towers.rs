use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{dbscan, ErrorReport, IngestConfig, ParseMode, Partition, StudyArea, TowerId};
use crate::error::{Error, Result};
use crate::geo::{dms_to_decimal, DmsCoordinate, GeoPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct RawTowerRecord {
    pub site_id: String,
    pub location: Option<GeoPoint>,
    pub declared_city: Option<String>,
    pub declared_district: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TowerSite {
    pub tower_id: TowerId,
    /// Centroid of the merged group.
    pub location: GeoPoint,
    /// Sorted original site ids.
    pub merged_site_ids: Vec<String>,
    pub partition: Partition,
}

const TOWER_HEADER: [&str; 5] = ["site_id", "lat", "lon", "city", "district"];

fn parse_axis(field: &str, latitude: bool) -> std::result::Result<f64, String> {
    if let Ok(v) = field.parse::<f64>() {
        return Ok(v);
    }
    let dms: DmsCoordinate = field.parse().map_err(|e: Error| e.to_string())?;
    if dms.hemisphere.is_latitude() != latitude {
        return Err(format!(
            "hemisphere {} given for {}",
            dms.hemisphere,
            if latitude { "latitude" } else { "longitude" }
        ));
    }
    dms_to_decimal(&dms).map_err(|e| e.to_string())
}

fn non_empty(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_owned())
}

/// Reads the tower lookup file. Malformed lines go to the error report in
/// lenient mode and abort in strict mode.
pub fn parse_towers(path: &Path, mode: ParseMode) -> Result<(Vec<RawTowerRecord>, ErrorReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Corrupt {
                path: path.into(),
                message: format!("{other:?}"),
            },
        })?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let cols: Vec<usize> = TOWER_HEADER
        .iter()
        .map(|n| {
            col(n).ok_or_else(|| Error::Parse {
                path: path.into(),
                line: 1,
                message: format!("missing column {n:?}"),
            })
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    let mut report = ErrorReport::default();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let parsed = row.map_err(|e| e.to_string()).and_then(|rec| {
            let get = |i: usize| rec.get(cols[i]).ok_or_else(|| format!("expected {} fields, got {}", TOWER_HEADER.len(), rec.len()));
            let site_id = get(0)?.to_owned();
            if site_id.is_empty() {
                return Err("empty site_id".to_owned());
            }
            let (lat, lon) = (get(1)?, get(2)?);
            let location = match (lat.is_empty(), lon.is_empty()) {
                (true, true) => None,
                (false, false) => {
                    let lat = parse_axis(lat, true)?;
                    let lon = parse_axis(lon, false)?;
                    Some(GeoPoint::new(lat, lon).map_err(|e| e.to_string())?)
                }
                _ => return Err("only one of lat/lon present".to_owned()),
            };
            Ok(RawTowerRecord {
                site_id,
                location,
                declared_city: non_empty(get(3)?),
                declared_district: non_empty(get(4)?),
            })
        });
        let parsed = parsed.and_then(|r| {
            if seen.insert(r.site_id.clone()) {
                Ok(r)
            } else {
                Err(format!("duplicate site_id {:?}", r.site_id))
            }
        });
        match parsed {
            Ok(r) => out.push(r),
            Err(message) => {
                if mode == ParseMode::Strict {
                    return Err(Error::Parse {
                        path: path.into(),
                        line,
                        message,
                    });
                }
                report.push(path, line, message);
            }
        }
    }
    Ok((out, report))
}

#[derive(Debug, Clone, Default)]
pub struct CleanedTowers {
    /// Sorted by tower id.
    pub towers: Vec<TowerSite>,
    pub dropped_no_coordinates: Vec<String>,
    pub dropped_noise: Vec<String>,
    pub dropped_outside_boundary: Vec<String>,
    pub dropped_unpartitioned: Vec<String>,
}

/// Drops coordinate-less sites, merges near duplicates with DBSCAN,
/// keeps merged sites inside the study boundary and tags their partition.
/// Declared city/district fields are deliberately not consulted.
pub fn clean_towers(raw: &[RawTowerRecord], cfg: &IngestConfig, area: &StudyArea) -> Result<CleanedTowers> {
    if let Some(issue) = cfg.validate().into_iter().next() {
        return Err(Error::Validation(issue));
    }
    let mut sorted: Vec<&RawTowerRecord> = raw.iter().collect();
    sorted.sort_by(|a, b| a.site_id.cmp(&b.site_id));

    let mut out = CleanedTowers::default();
    let mut located: Vec<(&str, GeoPoint)> = Vec::with_capacity(sorted.len());
    for r in sorted {
        match r.location {
            Some(p) => located.push((&r.site_id, p)),
            None => out.dropped_no_coordinates.push(r.site_id.clone()),
        }
    }

    let planar: Vec<(f64, f64)> = located.iter().map(|(_, p)| (p.lon, p.lat)).collect();
    let labels = dbscan(&planar, cfg.dbscan_epsilon, cfg.dbscan_min_points);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        match label {
            Some(c) => groups.entry(*c).or_default().push(i),
            None => out.dropped_noise.push(located[i].0.to_owned()),
        }
    }

    for members in groups.values() {
        let n = members.len() as f64;
        let (sum_lat, sum_lon) = members
            .iter()
            .fold((0.0, 0.0), |(a, b), &i| (a + located[i].1.lat, b + located[i].1.lon));
        let location = GeoPoint {
            lat: sum_lat / n,
            lon: sum_lon / n,
        };
        let merged_site_ids: Vec<String> = members.iter().map(|&i| located[i].0.to_owned()).collect();
        if !area.boundary.contains(&location) {
            out.dropped_outside_boundary.extend(merged_site_ids);
            continue;
        }
        let Some(partition) = area.partition_of(&location) else {
            out.dropped_unpartitioned.extend(merged_site_ids);
            continue;
        };
        out.towers.push(TowerSite {
            tower_id: TowerId(merged_site_ids[0].clone()),
            location,
            merged_site_ids,
            partition,
        });
    }
    if out.towers.is_empty() {
        return Err(Error::Empty("no tower sites survived cleaning".into()));
    }
    out.towers.sort_by(|a, b| a.tower_id.cmp(&b.tower_id));
    Ok(out)
}

/// Writes `tower_id,lat,lon,partition,merged_site_ids` (ids `;`-joined).
pub fn write_tower_sites(towers: &[TowerSite], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["tower_id", "lat", "lon", "partition", "merged_site_ids"])?;
    for t in towers {
        wr.write_record([
            t.tower_id.0.as_str(),
            &t.location.lat.to_string(),
            &t.location.lon.to_string(),
            t.partition.as_str(),
            &t.merged_site_ids.join(";"),
        ])?;
    }
    wr.flush().map_err(|e| Error::io("<tower sites>", e))?;
    Ok(())
}

pub fn read_tower_sites(path: &Path) -> Result<Vec<TowerSite>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| Error::Parse {
            path: path.into(),
            line: i + 2,
            message: m,
        };
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", rec.len())));
        }
        let lat: f64 = rec[1].parse().map_err(|e| bad(format!("lat: {e}")))?;
        let lon: f64 = rec[2].parse().map_err(|e| bad(format!("lon: {e}")))?;
        out.push(TowerSite {
            tower_id: TowerId(rec[0].to_owned()),
            location: GeoPoint::new(lat, lon).map_err(|e| bad(e.to_string()))?,
            partition: rec[3].parse().map_err(|e: Error| bad(e.to_string()))?,
            merged_site_ids: rec[4].split(';').map(str::to_owned).collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::BoundaryPolygon;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint { lat, lon }
    }

    fn area() -> StudyArea {
        let city = BoundaryPolygon::rectangle("city", pt(40.8, 28.5), pt(41.3, 29.5)).unwrap();
        let eu = BoundaryPolygon::rectangle("europe-side", pt(40.8, 28.5), pt(41.3, 29.0)).unwrap();
        let asia = BoundaryPolygon::rectangle("asia-side", pt(40.8, 29.0), pt(41.3, 29.5)).unwrap();
        StudyArea::new(city, vec![eu, asia]).unwrap()
    }

    fn raw(id: &str, loc: Option<(f64, f64)>, city: Option<&str>) -> RawTowerRecord {
        RawTowerRecord {
            site_id: id.into(),
            location: loc.map(|(a, b)| pt(a, b)),
            declared_city: city.map(Into::into),
            declared_district: None,
        }
    }

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("towers.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn parses_decimal_dms_and_missing_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "site_id,lat,lon,city,district\n\
             A,41.01,28.97,ISTANBUL,FATIH\n\
             B,41d00m36sN,28d58m12sE,ISTANBUL,\n\
             C,,,ISTANBUL,\n",
        );
        let (recs, report) = parse_towers(&p, ParseMode::Lenient).unwrap();
        assert!(report.is_empty());
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].location, Some(pt(41.01, 28.97)));
        let b = recs[1].location.unwrap();
        assert!((b.lat - (41.0 + 36.0 / 3600.0)).abs() < 1e-12);
        assert!((b.lon - (28.0 + 58.0 / 60.0 + 12.0 / 3600.0)).abs() < 1e-12);
        assert_eq!(recs[2].location, None);
        assert_eq!(recs[0].declared_district.as_deref(), Some("FATIH"));
    }

    #[test]
    fn lenient_mode_reports_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "site_id,lat,lon,city,district\n\
             A,41.01,28.97,,\n\
             B,41.02,28.98,,\n\
             C,41.03,xx,,\n\
             D,41.04,28.99,,\n",
        );
        let (recs, report) = parse_towers(&p, ParseMode::Lenient).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(report.len(), 1);
        assert_eq!(report.entries[0].line, 4);
        let mut text = Vec::new();
        report.write_to(&mut text).unwrap();
        assert!(String::from_utf8(text).unwrap().contains("towers.csv:4:"));

        let err = parse_towers(&p, ParseMode::Strict).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }

    #[test]
    fn duplicate_site_ids_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "site_id,lat,lon,city,district\nA,41,29,,\nA,41.1,29,,\n");
        let (recs, report) = parse_towers(&p, ParseMode::Lenient).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(report.len(), 1);
    }

    #[test]
    fn identical_coordinates_merge() {
        let t = clean_towers(
            &[raw("B", Some((41.0, 28.8)), None), raw("A", Some((41.0, 28.8)), None)],
            &IngestConfig::default(),
            &area(),
        )
        .unwrap();
        assert_eq!(t.towers.len(), 1);
        assert_eq!(t.towers[0].merged_site_ids, vec!["A", "B"]);
        assert_eq!(t.towers[0].tower_id, TowerId::from("A"));
    }

    #[test]
    fn distant_towers_stay_separate() {
        let t = clean_towers(
            &[raw("A", Some((41.0, 28.8)), None), raw("B", Some((41.01, 28.8)), None)],
            &IngestConfig::default(),
            &area(),
        )
        .unwrap();
        assert_eq!(t.towers.len(), 2);
    }

    #[test]
    fn declared_city_is_ignored() {
        let t = clean_towers(
            &[
                raw("A", Some((41.0, 28.8)), Some("BOLU")),
                raw("B", Some((39.9, 32.8)), Some("ISTANBUL")),
                raw("C", None, Some("ISTANBUL")),
            ],
            &IngestConfig::default(),
            &area(),
        )
        .unwrap();
        assert_eq!(t.towers.len(), 1);
        assert_eq!(t.towers[0].tower_id, TowerId::from("A"));
        assert_eq!(t.dropped_outside_boundary, vec!["B"]);
        assert_eq!(t.dropped_no_coordinates, vec!["C"]);
    }

    #[test]
    fn partition_is_tagged_and_centroid_used() {
        let t = clean_towers(
            &[
                raw("A", Some((41.0, 28.8)), None),
                raw("B", Some((41.0002, 28.8002)), None),
                raw("C", Some((41.0, 29.2)), None),
            ],
            &IngestConfig::default(),
            &area(),
        )
        .unwrap();
        assert_eq!(t.towers.len(), 2);
        assert_eq!(t.towers[0].partition, Partition::Europe);
        assert!((t.towers[0].location.lat - 41.0001).abs() < 1e-12);
        assert_eq!(t.towers[1].partition, Partition::Asia);
    }

    #[test]
    fn nothing_surviving_is_fatal() {
        let err = clean_towers(&[raw("A", None, None)], &IngestConfig::default(), &area()).unwrap_err();
        assert!(matches!(err, Error::Empty(_)));
    }

    #[test]
    fn tower_sites_round_trip() {
        let t = clean_towers(
            &[raw("A", Some((41.0123456789, 28.8)), None), raw("Z", Some((41.0, 29.3)), None)],
            &IngestConfig::default(),
            &area(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sites.csv");
        write_tower_sites(&t.towers, std::fs::File::create(&p).unwrap()).unwrap();
        assert_eq!(read_tower_sites(&p).unwrap(), t.towers);
    }
}
