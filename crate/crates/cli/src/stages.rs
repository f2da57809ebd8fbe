//! Pipeline stages. Each stage reads the artifacts of its predecessors from
//! the output directory and writes its own.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use mhcloc::clustering::{build_regions, partition_activity, read_regions, write_regions, ResidentialRegion};
use mhcloc::costmatrix::{build_matrices, load_matrix, save_matrix, CostKind, CostMatrix, CostProvider, HttpProvider, SyntheticProvider};
use mhcloc::evaluate::{access_report, map_current_facilities, read_facilities, Scenario};
use mhcloc::geo::geojson::{check_feature_collection, feature_collection, point_feature, polygon_feature, write_geojson, Properties};
use mhcloc::geo::{load_boundaries, voronoi_unchecked, BoundaryPolygon, GeoPoint};
use mhcloc::ingest::{clean_towers, parse_calls, parse_towers, read_joined_calls, read_tower_sites, write_joined_calls, write_tower_sites, StudyArea};
use mhcloc::pmedian::{read_instance, read_solution, solve, write_instance, write_solution, PMedianInstance, SolutionFile};
use mhcloc::residence::{mode_location, night_filter, residence_distribution, Coverage, ResidenceTable};
use mhcloc::synth::{generate, DatasetPaths};
use mhcloc::Error;

use crate::config::{PipelineConfig, ProviderKind};
use crate::failure::Failure;

type StageResult = Result<(), Failure>;

/// File layout of the output and cache directories.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub cache: PathBuf,
}

impl Artifacts {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Artifacts {
            dir: cfg.paths.output_dir.clone(),
            cache: cfg.paths.cache_dir.clone(),
        }
    }

    fn at(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn towers_clean(&self) -> PathBuf {
        self.at("towers_clean.csv")
    }
    pub fn calls_joined(&self) -> PathBuf {
        self.at("calls_joined.csv")
    }
    pub fn ingest_report(&self) -> PathBuf {
        self.at("ingest_report.txt")
    }
    pub fn towers_geojson(&self) -> PathBuf {
        self.at("towers.geojson")
    }
    pub fn tower_cells_geojson(&self) -> PathBuf {
        self.at("tower_cells.geojson")
    }
    pub fn residence_csv(&self) -> PathBuf {
        self.at("residence.csv")
    }
    pub fn residence_summary(&self) -> PathBuf {
        self.at("residence_summary.json")
    }
    pub fn mode_locations(&self) -> PathBuf {
        self.at("mode_locations.csv")
    }
    pub fn regions_csv(&self) -> PathBuf {
        self.at("regions.csv")
    }
    pub fn regions_geojson(&self) -> PathBuf {
        self.at("regions.geojson")
    }
    pub fn cache_key(&self) -> PathBuf {
        self.cache.join("cache_key.txt")
    }
    pub fn matrix(&self, kind: CostKind) -> PathBuf {
        self.cache.join(format!("{}.costmatrix", kind.as_str()))
    }
    pub fn instance(&self, kind: CostKind) -> PathBuf {
        self.at(&format!("instance_{}.txt", kind.as_str()))
    }
    pub fn solution(&self, kind: CostKind) -> PathBuf {
        self.at(&format!("solution_{}.json", kind.as_str()))
    }
    pub fn optimized_pins(&self, kind: CostKind) -> PathBuf {
        self.at(&format!("optimized_{}.geojson", kind.as_str()))
    }
    pub fn current_pins(&self) -> PathBuf {
        self.at("current_facilities.geojson")
    }
    pub fn report_txt(&self) -> PathBuf {
        self.at("report.txt")
    }
    pub fn report_csv(&self) -> PathBuf {
        self.at("report.csv")
    }

    /// Geodata files with the properties every feature must carry.
    pub fn geodata(&self) -> Vec<(PathBuf, &'static [&'static str])> {
        vec![
            (self.towers_geojson(), &["tower_id", "partition", "merged_site_ids"]),
            (self.tower_cells_geojson(), &["tower_id", "partition"]),
            (self.regions_geojson(), &["region_id", "weight", "partition"]),
            (self.current_pins(), &["name", "region_id"]),
            (self.optimized_pins(CostKind::DistanceM), &["region_id", "cost_kind", "served_weight"]),
            (self.optimized_pins(CostKind::DurationS), &["region_id", "cost_kind", "served_weight"]),
        ]
    }
}

const KINDS: [CostKind; 2] = [CostKind::DistanceM, CostKind::DurationS];

fn create(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn ensure_dir(dir: &Path) -> StageResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Core(Error::io(dir, e)))
}

fn require(path: &Path, run_first: &'static str) -> StageResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::MissingArtifact {
            path: path.to_owned(),
            run_first,
        })
    }
}

fn require_inputs(paths: &[&Path]) -> StageResult {
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| format!("input file {} does not exist", p.display()))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Failure::Config(missing))
    }
}

fn say(out: &mut dyn Write, line: String) -> StageResult {
    writeln!(out, "{line}").map_err(|e| Failure::Core(Error::io("<stdout>", e)))
}

fn load_boundary(path: &Path) -> Result<BoundaryPolygon, Failure> {
    load_boundaries(path)?
        .into_iter()
        .next()
        .ok_or_else(|| Failure::Core(Error::validation(format!("{} has no features", path.display()))))
}

fn props(pairs: Vec<(&str, serde_json::Value)>) -> Properties {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

pub fn ingest(cfg: &PipelineConfig, out: &mut dyn Write) -> StageResult {
    let p = &cfg.paths;
    let mut inputs: Vec<&Path> = vec![&p.towers, &p.calls, &p.boundary];
    inputs.extend(p.partitions.iter().map(PathBuf::as_path));
    require_inputs(&inputs)?;
    let art = Artifacts::new(cfg);
    ensure_dir(&art.dir)?;

    let area = StudyArea::load(&p.boundary, &p.partitions)?;
    let (raw, tower_report) = parse_towers(&p.towers, cfg.ingest.parse_mode)?;
    let cleaned = clean_towers(&raw, &cfg.ingest, &area)?;
    let calls = parse_calls(&p.calls, &cleaned.towers, &cfg.ingest)?;
    if calls.calls.is_empty() {
        return Err(Error::Empty("no refugee voice calls survived ingestion".into()).into());
    }

    write_tower_sites(&cleaned.towers, create(&art.towers_clean())?)?;
    write_joined_calls(&calls.calls, create(&art.calls_joined())?)?;

    let s = &calls.stats;
    let mut report = create(&art.ingest_report())?;
    let io = |e| Failure::Core(Error::io(art.ingest_report(), e));
    writeln!(report, "tower rows: {}\ntowers kept: {}", raw.len(), cleaned.towers.len()).map_err(io)?;
    for (what, ids) in [
        ("without coordinates", &cleaned.dropped_no_coordinates),
        ("as noise", &cleaned.dropped_noise),
        ("outside boundary", &cleaned.dropped_outside_boundary),
        ("outside partitions", &cleaned.dropped_unpartitioned),
    ] {
        writeln!(report, "dropped {what}: {} [{}]", ids.len(), ids.join(" ")).map_err(io)?;
    }
    writeln!(
        report,
        "call rows: {}\ncalls kept: {}\nnon-refugee: {}\nnon-voice: {}\nunresolved site: {}\nbad timestamp: {}\nout of period: {}\nmalformed: {}",
        s.rows, s.kept, s.non_refugee, s.non_voice, s.unresolved_site, s.bad_timestamp, s.out_of_period, s.malformed
    )
    .map_err(io)?;
    writeln!(report, "issues: {}", tower_report.len() + calls.report.len()).map_err(io)?;
    tower_report.write_to(&mut report).map_err(io)?;
    calls.report.write_to(&mut report).map_err(io)?;
    report.flush().map_err(io)?;

    let points: Vec<_> = cleaned
        .towers
        .iter()
        .map(|t| {
            point_feature(
                &t.location,
                props(vec![
                    ("tower_id", json!(t.tower_id.0)),
                    ("partition", json!(t.partition.as_str())),
                    ("merged_site_ids", json!(t.merged_site_ids.join(";"))),
                ]),
            )
        })
        .collect();
    write_geojson(&art.towers_geojson(), &feature_collection(points))?;
    let sites: Vec<GeoPoint> = cleaned.towers.iter().map(|t| t.location).collect();
    let diagram = voronoi_unchecked(&sites, &area.boundary);
    let cells: Vec<_> = cleaned
        .towers
        .iter()
        .zip(&diagram.cells)
        .filter(|(_, c)| !c.is_empty())
        .map(|(t, c)| {
            polygon_feature(
                &c.rings,
                props(vec![("tower_id", json!(t.tower_id.0)), ("partition", json!(t.partition.as_str()))]),
            )
        })
        .collect();
    write_geojson(&art.tower_cells_geojson(), &feature_collection(cells))?;

    say(
        out,
        format!(
            "ingest: {} towers from {} rows, {} calls kept of {} rows, {} issues",
            cleaned.towers.len(),
            raw.len(),
            s.kept,
            s.rows,
            tower_report.len() + calls.report.len()
        ),
    )
}

pub fn residence(cfg: &PipelineConfig, out: &mut dyn Write) -> StageResult {
    let art = Artifacts::new(cfg);
    require(&art.calls_joined(), "ingest")?;
    let calls = read_joined_calls(&art.calls_joined())?;
    let night = night_filter(&calls, &cfg.residence);
    let table = residence_distribution(&night)?;
    let coverage = Coverage::compute(&calls, &table);
    table.write_csv(create(&art.residence_csv())?)?;

    let mut w = csv_writer(&art.mode_locations())?;
    w.write_record(["caller_id", "tower_id"]).map_err(Error::from)?;
    for (caller, tower) in mode_location(&calls) {
        w.write_record([caller.as_str(), tower.0.as_str()]).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::io(art.mode_locations(), e))?;

    let summary = json!({
        "night_calls": night.len(),
        "subscribers_total": coverage.subscribers_total,
        "subscribers_with_night_calls": coverage.subscribers_with_night_calls,
        "coverage": coverage.fraction(),
        "total_expected_residents": table.total_residents(),
        "towers_with_residents": table.expected_residents.len(),
    });
    let mut f = create(&art.residence_summary())?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(Error::from)?;
    writeln!(f).map_err(|e| Error::io(art.residence_summary(), e))?;
    say(
        out,
        format!(
            "residence: {} of {} subscribers have night calls ({:.1}%), {} towers with residents",
            coverage.subscribers_with_night_calls,
            coverage.subscribers_total,
            100.0 * coverage.fraction(),
            table.expected_residents.len()
        ),
    )
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<fs::File>>, Failure> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn cluster(cfg: &PipelineConfig, out: &mut dyn Write) -> StageResult {
    let art = Artifacts::new(cfg);
    require(&art.towers_clean(), "ingest")?;
    require(&art.calls_joined(), "ingest")?;
    require(&art.residence_csv(), "residence")?;
    require_inputs(&[&cfg.paths.boundary])?;
    let towers = read_tower_sites(&art.towers_clean())?;
    let calls = read_joined_calls(&art.calls_joined())?;
    let expected = ResidenceTable::read_tower_csv(&art.residence_csv())?;
    let boundary = load_boundary(&cfg.paths.boundary)?;
    let activity = partition_activity(&calls, &towers);
    let regions = build_regions(&towers, &expected, &activity, &cfg.cluster, &boundary)?;
    write_regions(&regions, create(&art.regions_csv())?)?;

    let features: Vec<_> = regions
        .iter()
        .filter(|r| !r.polygon.is_empty())
        .map(|r| {
            polygon_feature(
                &r.polygon.rings,
                props(vec![
                    ("region_id", json!(r.region_id)),
                    ("weight", json!(r.weight)),
                    ("partition", json!(r.partition.as_str())),
                    ("tower_count", json!(r.member_tower_ids.len())),
                    ("center_lat", json!(r.center.lat)),
                    ("center_lon", json!(r.center.lon)),
                ]),
            )
        })
        .collect();
    write_geojson(&art.regions_geojson(), &feature_collection(features))?;

    let mut per_side: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &regions {
        *per_side.entry(r.partition.as_str()).or_default() += 1;
    }
    let split: Vec<String> = per_side.iter().map(|(p, k)| format!("{p} {k}")).collect();
    say(out, format!("cluster: {} regions ({})", regions.len(), split.join(", ")))
}

fn provider_descriptor(cfg: &PipelineConfig) -> Result<String, Failure> {
    Ok(match cfg.costs.provider {
        ProviderKind::Synthetic => SyntheticProvider::with_wait(cfg.costs.speed_mps, cfg.costs.wait_s)?.label(),
        ProviderKind::Http => {
            let h = &cfg.costs.http;
            format!("http(endpoint={}, mode={}, utc_offset_minutes={})", h.endpoint, h.mode, h.utc_offset_minutes)
        }
    })
}

fn cache_key(cfg: &PipelineConfig, centers: &[GeoPoint]) -> Result<String, Failure> {
    let mut key = format!(
        "provider {}\ndeparture {}\nn {}\n",
        provider_descriptor(cfg)?,
        cfg.costs.departure.format("%Y-%m-%dT%H:%M:%S"),
        centers.len()
    );
    for c in centers {
        key.push_str(&format!("{},{}\n", c.lat, c.lon));
    }
    Ok(key)
}

fn cached(art: &Artifacts, key: &str, n: usize) -> Option<(CostMatrix, CostMatrix)> {
    if fs::read_to_string(art.cache_key()).ok()? != key {
        return None;
    }
    let d = load_matrix(&art.matrix(CostKind::DistanceM)).ok()?;
    let t = load_matrix(&art.matrix(CostKind::DurationS)).ok()?;
    let ok = d.kind == CostKind::DistanceM && t.kind == CostKind::DurationS && d.expect_dim(n).is_ok() && t.expect_dim(n).is_ok();
    ok.then_some((d, t))
}

pub fn costs(cfg: &PipelineConfig, refresh: bool, out: &mut dyn Write) -> StageResult {
    let art = Artifacts::new(cfg);
    require(&art.regions_csv(), "cluster")?;
    let regions = read_regions(&art.regions_csv())?;
    let centers: Vec<GeoPoint> = regions.iter().map(|r| r.center).collect();
    let key = cache_key(cfg, &centers)?;

    let hit = if refresh { None } else { cached(&art, &key, centers.len()) };
    let (dist, dur, source) = match hit {
        Some((d, t)) => (d, t, "cache"),
        None => {
            let mut provider: Box<dyn CostProvider> = match cfg.costs.provider {
                ProviderKind::Synthetic => Box::new(SyntheticProvider::with_wait(cfg.costs.speed_mps, cfg.costs.wait_s)?),
                ProviderKind::Http => Box::new(HttpProvider::from_env(cfg.costs.http.clone())?),
            };
            let (d, t) = build_matrices(&centers, provider.as_mut(), cfg.costs.departure)?;
            ensure_dir(&art.cache)?;
            // Remove the key first so an interrupted write never looks valid.
            let _ = fs::remove_file(art.cache_key());
            save_matrix(&d, &art.matrix(CostKind::DistanceM))?;
            save_matrix(&t, &art.matrix(CostKind::DurationS))?;
            fs::write(art.cache_key(), &key).map_err(|e| Error::io(art.cache_key(), e))?;
            (d, t, "provider")
        }
    };

    ensure_dir(&art.dir)?;
    let weights: Vec<f64> = regions.iter().map(|r| r.weight).collect();
    let labels: Vec<usize> = regions.iter().map(|r| r.region_id).collect();
    let m = cfg.solver.m.min(regions.len());
    for matrix in [&dist, &dur] {
        let kind = matrix.kind;
        let inst = PMedianInstance::new(m, weights.clone(), matrix.clone(), labels.clone())?;
        write_instance(&inst, &art.matrix(kind), &art.instance(kind))?;
    }
    say(
        out,
        format!(
            "costs: {n}x{n} matrices from {source} ({}), {} missing cells imputed",
            dist.provider,
            dist.missing_count(),
            n = centers.len()
        ),
    )
}

fn pins(inst: &PMedianInstance, sol: &SolutionFile, regions: &[ResidentialRegion]) -> serde_json::Value {
    let mut served: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (row, w) in sol.assignment.iter().zip(&inst.weights) {
        let e = served.entry(row.facility_region_id).or_default();
        e.0 += w;
        e.1 += 1;
    }
    let by_id: BTreeMap<usize, &ResidentialRegion> = regions.iter().map(|r| (r.region_id, r)).collect();
    let features = sol
        .open_region_ids
        .iter()
        .filter_map(|id| by_id.get(id).map(|r| (id, r)))
        .map(|(id, r)| {
            let (w, count) = served.get(id).copied().unwrap_or_default();
            point_feature(
                &r.center,
                props(vec![
                    ("region_id", json!(id)),
                    ("cost_kind", json!(sol.cost_kind.as_str())),
                    ("served_weight", json!(w)),
                    ("served_regions", json!(count)),
                    ("partition", json!(r.partition.as_str())),
                ]),
            )
        })
        .collect();
    feature_collection(features)
}

pub fn solve_stage(cfg: &PipelineConfig, out: &mut dyn Write) -> StageResult {
    let art = Artifacts::new(cfg);
    require(&art.regions_csv(), "cluster")?;
    for kind in KINDS {
        require(&art.instance(kind), "costs")?;
    }
    let regions = read_regions(&art.regions_csv())?;
    let opts = cfg.solver.options();
    for kind in KINDS {
        let inst = read_instance(&art.instance(kind))?.with_m(cfg.solver.m)?;
        let sol = solve(&inst, &opts)?;
        let file = SolutionFile::new(&inst, &sol);
        write_solution(&file, &art.solution(kind))?;
        write_geojson(&art.optimized_pins(kind), &pins(&inst, &file, &regions))?;
        say(
            out,
            format!(
                "solve {}: m = {}, objective {}, proof {:?}, gap {:.2e}",
                kind.as_str(),
                inst.m,
                sol.objective,
                sol.proof,
                sol.gap
            ),
        )?;
    }
    Ok(())
}

pub fn evaluate(cfg: &PipelineConfig, out: &mut dyn Write) -> StageResult {
    let art = Artifacts::new(cfg);
    require(&art.regions_csv(), "cluster")?;
    for kind in KINDS {
        require(&art.instance(kind), "costs")?;
        require(&art.solution(kind), "solve")?;
    }
    require_inputs(&[&cfg.paths.current_facilities, &cfg.paths.boundary])?;
    let regions = read_regions(&art.regions_csv())?;
    let boundary = load_boundary(&cfg.paths.boundary)?;
    let d = read_instance(&art.instance(CostKind::DistanceM))?;
    let t = read_instance(&art.instance(CostKind::DurationS))?;
    d.costs.expect_dim(regions.len())?;

    let facilities = read_facilities(&cfg.paths.current_facilities)?;
    let points: Vec<GeoPoint> = facilities.iter().map(|f| f.point()).collect::<Result<_, _>>()?;
    let current = map_current_facilities(&points, &regions, Some(&boundary))?;
    let sol_d = read_solution(&art.solution(CostKind::DistanceM))?;
    let sol_t = read_solution(&art.solution(CostKind::DurationS))?;
    let scenarios = vec![
        Scenario {
            label: cfg.report.current_label.clone(),
            open: current.iter().copied().collect(),
        },
        Scenario {
            label: cfg.report.distance_label.clone(),
            open: sol_d.open_indices(&d)?,
        },
        Scenario {
            label: cfg.report.duration_label.clone(),
            open: sol_t.open_indices(&t)?,
        },
    ];
    let report = access_report(&regions, &scenarios, &d.costs, &t.costs)?;

    let text = format!("{}\n{}", report.to_text(), report.supplementary_text());
    fs::write(art.report_txt(), &text).map_err(|e| Error::io(art.report_txt(), e))?;
    report.write_csv(create(&art.report_csv())?)?;

    let pins: Vec<_> = facilities
        .iter()
        .zip(&points)
        .map(|(f, p)| {
            let region = map_current_facilities(std::slice::from_ref(p), &regions, None)
                .ok()
                .and_then(|s| s.into_iter().next())
                .map(|i| regions[i].region_id);
            point_feature(p, props(vec![("name", json!(f.name)), ("region_id", json!(region))]))
        })
        .collect();
    write_geojson(&art.current_pins(), &feature_collection(pins))?;
    write!(out, "{text}").map_err(|e| Failure::Core(Error::io("<stdout>", e)))
}

/// Paths the synthetic dataset is written to.
pub fn synth_paths(cfg: &PipelineConfig) -> Result<DatasetPaths, Failure> {
    let p = &cfg.paths;
    let [partitions] = p.partitions.as_slice() else {
        return Err(Failure::Config(vec!["synth needs exactly one paths.partitions file".into()]));
    };
    let truth_dir = p.towers.parent().unwrap_or(Path::new(""));
    Ok(DatasetPaths {
        towers: p.towers.clone(),
        calls: p.calls.clone(),
        boundary: p.boundary.clone(),
        partitions: partitions.clone(),
        facilities: p.current_facilities.clone(),
        ground_truth: truth_dir.join("ground_truth.csv"),
    })
}

pub fn synth(cfg: &PipelineConfig, out: &mut dyn Write) -> StageResult {
    let issues = cfg.synth.validate();
    if !issues.is_empty() {
        return Err(Failure::Config(issues));
    }
    let paths = synth_paths(cfg)?;
    let data = generate(&cfg.synth)?;
    data.write_paths(&paths)?;
    say(
        out,
        format!(
            "synth: {} towers, {} call rows, {} subscribers -> {}",
            data.towers.len(),
            data.calls.len(),
            data.ground_truth.len(),
            paths.towers.parent().unwrap_or(Path::new(".")).display()
        ),
    )
}

pub fn all(cfg: &PipelineConfig, refresh: bool, out: &mut dyn Write) -> StageResult {
    ingest(cfg, out)?;
    residence(cfg, out)?;
    cluster(cfg, out)?;
    costs(cfg, refresh, out)?;
    solve_stage(cfg, out)?;
    evaluate(cfg, out)
}

/// Structural check of every geodata artifact present in the output directory.
pub fn check_geodata(art: &Artifacts) -> Vec<String> {
    let mut problems = Vec::new();
    for (path, required) in art.geodata() {
        let Ok(text) = fs::read_to_string(&path) else {
            continue;
        };
        match serde_json::from_str::<serde_json::Value>(&text) {
            Ok(doc) => {
                if let Err(e) = check_feature_collection(&doc, required) {
                    problems.push(format!("{}: {e}", path.display()));
                }
            }
            Err(e) => problems.push(format!("{}: {e}", path.display())),
        }
    }
    problems
}
