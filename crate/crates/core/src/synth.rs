//! Synthetic tower and call datasets with known home locations.
//!
//! Towers are scattered over a rectangular study area split into a western
//! (`europe`) and an eastern (`asia`) partition by a meridian. Each person
//! lives near one of several Gaussian population blobs and is homed at the
//! tower nearest to their sampled position. Night calls come from the home
//! tower, except for a `noise` fraction placed at uniformly random towers.
//! Day calls mix home, a per-person work tower and random towers.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluate::{write_facilities, NamedPoint};
use crate::geo::geojson::{feature_collection, polygon_feature, write_geojson, Properties};
use crate::geo::{BoundaryPolygon, DmsCoordinate, GeoPoint};
use crate::ingest::TIMESTAMP_FORMAT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blob {
    pub lat: f64,
    pub lon: f64,
    pub stddev_deg: f64,
    pub persons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
    /// Meridian separating the western and eastern partitions.
    pub split_lon: f64,
    /// Total tower rows, including the special cases below.
    pub tower_count: usize,
    /// Towers placed 0.0001 degrees from another tower.
    pub near_duplicates: usize,
    /// Towers listed without coordinates.
    pub missing_coordinates: usize,
    /// Towers located outside the study area.
    pub foreign_towers: usize,
    /// Share of regular towers placed around blobs rather than uniformly.
    pub clustered_tower_share: f64,
    pub population: Vec<Blob>,
    /// Poisson mean of night calls per person over the whole period.
    pub calls_per_person_night: f64,
    /// Day calls per person as a multiple of the night mean.
    pub day_call_multiplier: f64,
    /// Share of night calls made away from home.
    pub noise: f64,
    /// Day-call location mixture: home, work; the rest is random.
    pub day_home_share: f64,
    pub day_work_share: f64,
    /// Extra non-refugee voice rows, as a share of refugee voice rows.
    pub non_refugee_share: f64,
    /// Extra refugee SMS rows, as a share of refugee voice rows.
    pub sms_share: f64,
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
    pub current_facilities: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        let blob = |lat, lon, stddev_deg, persons| Blob {
            lat,
            lon,
            stddev_deg,
            persons,
        };
        ScenarioSpec {
            seed: 2017,
            min_lat: 40.95,
            max_lat: 41.25,
            min_lon: 28.55,
            max_lon: 29.45,
            split_lon: 29.02,
            tower_count: 1000,
            near_duplicates: 30,
            missing_coordinates: 6,
            foreign_towers: 4,
            clustered_tower_share: 0.5,
            population: vec![
                blob(41.02, 28.65, 0.030, 2600),
                blob(41.05, 28.80, 0.025, 3600),
                blob(41.00, 28.92, 0.020, 3100),
                blob(41.08, 28.96, 0.020, 2200),
                blob(41.17, 28.75, 0.030, 1500),
                blob(41.02, 29.10, 0.025, 3000),
                blob(40.99, 29.25, 0.030, 2300),
                blob(41.10, 29.15, 0.030, 1700),
            ],
            calls_per_person_night: 6.0,
            day_call_multiplier: 1.0,
            noise: 0.1,
            day_home_share: 0.4,
            day_work_share: 0.45,
            non_refugee_share: 0.1,
            sms_share: 0.1,
            period_start: NaiveDate::from_ymd_opt(2017, 1, 1).expect("valid date"),
            period_end: NaiveDate::from_ymd_opt(2017, 1, 31).expect("valid date"),
            current_facilities: 20,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let area_ok = self.min_lat < self.max_lat
            && self.min_lon < self.max_lon
            && GeoPoint::new(self.min_lat, self.min_lon).is_ok()
            && GeoPoint::new(self.max_lat, self.max_lon).is_ok();
        if !area_ok {
            v.push("synth: study area bounds are invalid".into());
        }
        if !(self.split_lon > self.min_lon && self.split_lon < self.max_lon) {
            v.push(format!("synth.split_lon {} must lie strictly inside the area", self.split_lon));
        }
        let special = self.near_duplicates + self.missing_coordinates + self.foreign_towers;
        if self.tower_count <= special + 1 {
            v.push(format!("synth.tower_count {} leaves no regular towers", self.tower_count));
        }
        if self.population.is_empty() {
            v.push("synth.population needs at least one blob".into());
        }
        for (i, b) in self.population.iter().enumerate() {
            if area_ok && !(b.lat > self.min_lat && b.lat < self.max_lat && b.lon > self.min_lon && b.lon < self.max_lon) {
                v.push(format!("synth.population[{i}] center ({}, {}) lies outside the area", b.lat, b.lon));
            }
            if b.persons == 0 {
                v.push(format!("synth.population[{i}].persons must be > 0"));
            }
            if !(b.stddev_deg > 0.0 && b.stddev_deg.is_finite()) {
                v.push(format!("synth.population[{i}].stddev_deg must be > 0"));
            }
        }
        if !(self.calls_per_person_night > 0.0 && self.calls_per_person_night.is_finite()) {
            v.push("synth.calls_per_person_night must be > 0".into());
        }
        for (name, x) in [
            ("noise", self.noise),
            ("clustered_tower_share", self.clustered_tower_share),
            ("day_home_share", self.day_home_share),
            ("day_work_share", self.day_work_share),
        ] {
            if !(0.0..=1.0).contains(&x) {
                v.push(format!("synth.{name} must be in [0, 1] (got {x})"));
            }
        }
        if self.day_home_share + self.day_work_share > 1.0 + 1e-12 {
            v.push("synth.day_home_share + day_work_share must not exceed 1".into());
        }
        for (name, x) in [
            ("day_call_multiplier", self.day_call_multiplier),
            ("non_refugee_share", self.non_refugee_share),
            ("sms_share", self.sms_share),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("synth.{name} must be >= 0"));
            }
        }
        if self.period_end < self.period_start {
            v.push("synth.period_end precedes period_start".into());
        }
        if self.current_facilities == 0 {
            v.push("synth.current_facilities must be > 0".into());
        }
        v
    }

    pub fn boundary(&self) -> Result<BoundaryPolygon> {
        BoundaryPolygon::rectangle(
            "study-area",
            GeoPoint::new(self.min_lat, self.min_lon)?,
            GeoPoint::new(self.max_lat, self.max_lon)?,
        )
    }

    pub fn partitions(&self) -> Result<Vec<BoundaryPolygon>> {
        Ok(vec![
            BoundaryPolygon::rectangle(
                "europe",
                GeoPoint::new(self.min_lat, self.min_lon)?,
                GeoPoint::new(self.max_lat, self.split_lon)?,
            )?,
            BoundaryPolygon::rectangle(
                "asia",
                GeoPoint::new(self.min_lat, self.split_lon)?,
                GeoPoint::new(self.max_lat, self.max_lon)?,
            )?,
        ])
    }

    pub fn persons(&self) -> usize {
        self.population.iter().map(|b| b.persons).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTower {
    pub site_id: String,
    pub location: Option<GeoPoint>,
    pub city: String,
    pub district: String,
    /// Write coordinates as degrees-minutes-seconds text.
    pub dms: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCall {
    pub caller_id: String,
    pub refugee: bool,
    pub callee_refugee: bool,
    pub voice: bool,
    pub outgoing: bool,
    pub timestamp: NaiveDateTime,
    pub site_id: String,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: ScenarioSpec,
    pub towers: Vec<SynthTower>,
    pub calls: Vec<SynthCall>,
    /// Home site of every refugee subscriber.
    pub ground_truth: BTreeMap<String, String>,
    pub facilities: Vec<NamedPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPaths {
    pub towers: PathBuf,
    pub calls: PathBuf,
    pub boundary: PathBuf,
    pub partitions: PathBuf,
    pub facilities: PathBuf,
    pub ground_truth: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            towers: dir.join("towers.csv"),
            calls: dir.join("calls.csv"),
            boundary: dir.join("boundary.geojson"),
            partitions: dir.join("partitions.geojson"),
            facilities: dir.join("current_facilities.csv"),
            ground_truth: dir.join("ground_truth.csv"),
        }
    }
}

fn nearest(points: &[GeoPoint], p: &GeoPoint) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, q) in points.iter().enumerate() {
        let d = p.planar_dist2(q);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

struct Area {
    min_lat: f64,
    max_lat: f64,
    min_lon: f64,
    max_lon: f64,
}

impl Area {
    fn contains(&self, lat: f64, lon: f64) -> bool {
        lat > self.min_lat && lat < self.max_lat && lon > self.min_lon && lon < self.max_lon
    }

    fn uniform(&self, rng: &mut ChaCha8Rng) -> GeoPoint {
        let lat = rng.gen_range(self.min_lat..self.max_lat);
        let lon = rng.gen_range(self.min_lon..self.max_lon);
        GeoPoint { lat, lon }
    }

    /// Gaussian sample around `b`, redrawn until it falls inside the area.
    fn around(&self, b: &Blob, rng: &mut ChaCha8Rng) -> GeoPoint {
        let normal = Normal::new(0.0, b.stddev_deg).expect("validated stddev");
        loop {
            let lat = b.lat + normal.sample(rng);
            let lon = b.lon + normal.sample(rng);
            if self.contains(lat, lon) {
                return GeoPoint { lat, lon };
            }
        }
    }
}

fn pick_blob<'a>(blobs: &'a [Blob], total: usize, rng: &mut ChaCha8Rng) -> &'a Blob {
    let mut r = rng.gen_range(0..total);
    for b in blobs {
        if r < b.persons {
            return b;
        }
        r -= b.persons;
    }
    &blobs[blobs.len() - 1]
}

fn random_time(rng: &mut ChaCha8Rng, spec: &ScenarioSpec, night: bool) -> NaiveDateTime {
    let days = (spec.period_end - spec.period_start).num_days();
    let day = spec.period_start + Duration::days(rng.gen_range(0..=days));
    // Night is 23:00-24:00 plus 00:00-08:00 of the same date; day is 08:00-23:00.
    let secs = if night {
        (23 * 3600 + rng.gen_range(0..9 * 3600)) % (24 * 3600)
    } else {
        8 * 3600 + rng.gen_range(0..15 * 3600)
    };
    day.and_hms_opt(0, 0, 0).expect("midnight") + Duration::seconds(secs)
}

/// Builds the dataset in memory; identical specs give identical datasets.
pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticDataset> {
    if let Some(issue) = spec.validate().into_iter().next() {
        return Err(Error::Validation(issue));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let area = Area {
        min_lat: spec.min_lat,
        max_lat: spec.max_lat,
        min_lon: spec.min_lon,
        max_lon: spec.max_lon,
    };
    let total_persons = spec.persons();

    let regular = spec.tower_count - spec.near_duplicates - spec.missing_coordinates - spec.foreign_towers;
    let mut locations: Vec<GeoPoint> = Vec::with_capacity(regular + spec.near_duplicates);
    for _ in 0..regular {
        let p = if rng.gen_bool(spec.clustered_tower_share) {
            let b = pick_blob(&spec.population, total_persons, &mut rng);
            area.around(b, &mut rng)
        } else {
            area.uniform(&mut rng)
        };
        locations.push(p);
    }
    for _ in 0..spec.near_duplicates {
        let base = locations[rng.gen_range(0..regular)];
        let (dlat, dlon) = [(1e-4, 0.0), (0.0, 1e-4), (-1e-4, 0.0), (0.0, -1e-4)][rng.gen_range(0..4)];
        let p = GeoPoint {
            lat: base.lat + dlat,
            lon: base.lon + dlon,
        };
        locations.push(if area.contains(p.lat, p.lon) { p } else { base });
    }

    // Shuffle so special cases do not cluster at the end of the id range.
    let mut kinds: Vec<Option<GeoPoint>> = locations.iter().copied().map(Some).collect();
    kinds.extend(std::iter::repeat_n(None, spec.missing_coordinates));
    let foreign_start = kinds.len();
    for _ in 0..spec.foreign_towers {
        let lat = rng.gen_range(40.60..40.80);
        let lon = rng.gen_range(31.50..31.70);
        kinds.push(Some(GeoPoint { lat, lon }));
    }
    let mut order: Vec<usize> = (0..kinds.len()).collect();
    order.shuffle(&mut rng);

    let mut towers = vec![None; kinds.len()];
    for (rank, &src) in order.iter().enumerate() {
        let foreign = src >= foreign_start;
        towers[src] = Some(SynthTower {
            site_id: format!("S{:05}", rank + 1),
            location: kinds[src],
            city: if foreign { "BOLU".into() } else { "ISTANBUL".into() },
            district: format!("D{:02}", rank % 39 + 1),
            dms: !foreign && kinds[src].is_some() && rng.gen_bool(0.02),
        });
    }
    let towers: Vec<SynthTower> = towers.into_iter().map(|t| t.expect("every slot filled")).collect();
    // Candidate homes and call sites: towers with usable coordinates.
    let usable: Vec<usize> = (0..locations.len()).collect();
    let site = |i: usize| towers[usable[i]].site_id.clone();

    let night = Poisson::new(spec.calls_per_person_night).map_err(|e| Error::validation(e.to_string()))?;
    let day_mean = spec.calls_per_person_night * spec.day_call_multiplier;
    let day = if day_mean > 0.0 {
        Some(Poisson::new(day_mean).map_err(|e| Error::validation(e.to_string()))?)
    } else {
        None
    };

    let mut calls = Vec::new();
    let mut ground_truth = BTreeMap::new();
    let mut person = 0usize;
    for blob in &spec.population {
        for _ in 0..blob.persons {
            person += 1;
            let caller_id = format!("R{person:06}");
            let home = nearest(&locations, &area.around(blob, &mut rng));
            let work_blob = pick_blob(&spec.population, total_persons, &mut rng);
            let work = nearest(&locations, &area.around(work_blob, &mut rng));
            ground_truth.insert(caller_id.clone(), site(home));

            let mut emit = |rng: &mut ChaCha8Rng, tower: usize, is_night: bool| {
                calls.push(SynthCall {
                    caller_id: caller_id.clone(),
                    refugee: true,
                    callee_refugee: rng.gen_bool(0.7),
                    voice: true,
                    outgoing: rng.gen_bool(0.5),
                    timestamp: random_time(rng, spec, is_night),
                    site_id: site(tower),
                });
            };
            let n_night = night.sample(&mut rng) as usize;
            for _ in 0..n_night {
                let t = if spec.noise > 0.0 && rng.gen_bool(spec.noise) {
                    rng.gen_range(0..locations.len())
                } else {
                    home
                };
                emit(&mut rng, t, true);
            }
            let n_day = day.map_or(0, |d| d.sample(&mut rng) as usize);
            for _ in 0..n_day {
                let u: f64 = rng.gen();
                let t = if u < spec.day_home_share {
                    home
                } else if u < spec.day_home_share + spec.day_work_share {
                    work
                } else {
                    rng.gen_range(0..locations.len())
                };
                emit(&mut rng, t, false);
            }
        }
    }

    let voice_rows = calls.len();
    let extra = |share: f64| (share * voice_rows as f64).round() as usize;
    for k in 0..extra(spec.non_refugee_share) {
        let t = rng.gen_range(0..locations.len());
        calls.push(SynthCall {
            caller_id: format!("N{:06}", k % 5000 + 1),
            refugee: false,
            callee_refugee: rng.gen_bool(0.3),
            voice: true,
            outgoing: rng.gen_bool(0.5),
            timestamp: random_time(&mut rng, spec, k % 3 == 0),
            site_id: site(t),
        });
    }
    for k in 0..extra(spec.sms_share) {
        let t = rng.gen_range(0..locations.len());
        calls.push(SynthCall {
            caller_id: format!("R{:06}", rng.gen_range(1..=total_persons)),
            refugee: true,
            callee_refugee: rng.gen_bool(0.7),
            voice: false,
            outgoing: rng.gen_bool(0.5),
            timestamp: random_time(&mut rng, spec, k % 3 == 0),
            site_id: site(t),
        });
    }
    calls.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.caller_id.cmp(&b.caller_id)));

    let mut facilities = Vec::with_capacity(spec.current_facilities);
    for k in 0..spec.current_facilities {
        // Existing clinics favor the western side regardless of population.
        let p = loop {
            let p = area.uniform(&mut rng);
            if p.lon < spec.split_lon || rng.gen_bool(0.3) {
                break p;
            }
        };
        facilities.push(NamedPoint {
            name: format!("clinic-{:02}", k + 1),
            lat: p.lat,
            lon: p.lon,
        });
    }

    Ok(SyntheticDataset {
        spec: spec.clone(),
        towers,
        calls,
        ground_truth,
        facilities,
    })
}

fn coord(value: f64, latitude: bool, dms: bool) -> Result<String> {
    Ok(if dms {
        DmsCoordinate::from_decimal(value, latitude)?.to_string()
    } else {
        format!("{value:.6}")
    })
}

impl SyntheticDataset {
    pub fn write_towers(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["site_id", "lat", "lon", "city", "district"])?;
        let mut rows: Vec<&SynthTower> = self.towers.iter().collect();
        rows.sort_by(|a, b| a.site_id.cmp(&b.site_id));
        for t in rows {
            let (lat, lon) = match t.location {
                Some(p) => (coord(p.lat, true, t.dms)?, coord(p.lon, false, t.dms)?),
                None => (String::new(), String::new()),
            };
            wr.write_record([t.site_id.as_str(), &lat, &lon, &t.city, &t.district])?;
        }
        wr.flush().map_err(|e| Error::io("<towers>", e))?;
        Ok(())
    }

    pub fn write_calls(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["caller_id", "caller_group", "callee_group", "event_type", "call_type", "timestamp", "site_id"])?;
        let group = |r: bool| if r { "refugee" } else { "non-refugee" };
        for c in &self.calls {
            wr.write_record([
                c.caller_id.as_str(),
                group(c.refugee),
                group(c.callee_refugee),
                if c.voice { "voice" } else { "sms" },
                if c.outgoing { "out" } else { "in" },
                &c.timestamp.format(TIMESTAMP_FORMAT).to_string(),
                &c.site_id,
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<calls>", e))?;
        Ok(())
    }

    pub fn write_ground_truth(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["caller_id", "home_site_id"])?;
        for (caller, site) in &self.ground_truth {
            wr.write_record([caller, site])?;
        }
        wr.flush().map_err(|e| Error::io("<ground truth>", e))?;
        Ok(())
    }

    /// Writes every file of the dataset into `dir` under default names.
    pub fn write_to(&self, dir: &Path) -> Result<DatasetPaths> {
        let paths = DatasetPaths::in_dir(dir);
        self.write_paths(&paths)?;
        Ok(paths)
    }

    pub fn write_paths(&self, paths: &DatasetPaths) -> Result<()> {
        let create = |p: &Path| {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            fs::File::create(p).map(std::io::BufWriter::new).map_err(|e| Error::io(p, e))
        };
        self.write_towers(create(&paths.towers)?)?;
        self.write_calls(create(&paths.calls)?)?;
        self.write_ground_truth(create(&paths.ground_truth)?)?;
        write_facilities(&self.facilities, create(&paths.facilities)?)?;

        let named = |poly: &BoundaryPolygon| {
            let mut props = Properties::new();
            props.insert("name".into(), json!(poly.name));
            polygon_feature(&poly.rings, props)
        };
        let boundary = self.spec.boundary()?;
        write_geojson(&paths.boundary, &feature_collection(vec![named(&boundary)]))?;
        let parts: Vec<_> = self.spec.partitions()?.iter().map(named).collect();
        write_geojson(&paths.partitions, &feature_collection(parts))?;
        Ok(())
    }
}

/// Reads `caller_id,home_site_id` rows.
pub fn read_ground_truth(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Corrupt {
                path: path.into(),
                message: "expected caller_id,home_site_id".into(),
            });
        }
        out.insert(rec[0].to_owned(), rec[1].to_owned());
    }
    Ok(out)
}
