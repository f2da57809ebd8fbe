//! Pipeline configuration: one TOML file, paths relative to that file.

use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use mhcloc::clustering::ClusterConfig;
use mhcloc::costmatrix::HttpProviderConfig;
use mhcloc::ingest::IngestConfig;
use mhcloc::pmedian::SolveOptions;
use mhcloc::residence::ResidenceConfig;
use mhcloc::synth::ScenarioSpec;

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub towers: PathBuf,
    pub calls: PathBuf,
    pub boundary: PathBuf,
    pub partitions: Vec<PathBuf>,
    pub current_facilities: PathBuf,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            towers: "data/towers.csv".into(),
            calls: "data/calls.csv".into(),
            boundary: "data/boundary.geojson".into(),
            partitions: vec!["data/partitions.geojson".into()],
            current_facilities: "data/current_facilities.csv".into(),
            cache_dir: "out/cache".into(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Synthetic,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostsConfig {
    pub provider: ProviderKind,
    /// Local departure time for every query.
    pub departure: NaiveDateTime,
    /// Synthetic provider travel speed.
    pub speed_mps: f64,
    /// Synthetic provider fixed wait added to every non-zero trip.
    pub wait_s: f64,
    pub http: HttpProviderConfig,
}

impl Default for CostsConfig {
    fn default() -> Self {
        CostsConfig {
            provider: ProviderKind::Synthetic,
            departure: NaiveDate::from_ymd_opt(2017, 3, 6)
                .and_then(|d| d.and_hms_opt(10, 0, 0))
                .expect("valid default departure"),
            speed_mps: 8.0,
            wait_s: 300.0,
            http: HttpProviderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Number of facilities to open.
    pub m: usize,
    pub epsilon: f64,
    pub max_nodes: usize,
    pub time_limit_s: Option<f64>,
    pub mu_start: f64,
    pub mu_halve_after: usize,
    pub max_iters_per_node: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolveOptions::default();
        SolverConfig {
            m: 20,
            epsilon: o.epsilon,
            max_nodes: o.max_nodes,
            time_limit_s: o.time_limit_s,
            mu_start: o.mu_start,
            mu_halve_after: o.mu_halve_after,
            max_iters_per_node: o.max_iters_per_node,
            seed: o.seed,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            epsilon: self.epsilon,
            max_nodes: self.max_nodes,
            time_limit_s: self.time_limit_s,
            mu_start: self.mu_start,
            mu_halve_after: self.mu_halve_after,
            max_iters_per_node: self.max_iters_per_node,
            seed: self.seed,
            ..SolveOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub current_label: String,
    pub distance_label: String,
    pub duration_label: String,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            current_label: "Current".into(),
            distance_label: "Distance-optimized".into(),
            duration_label: "Duration-optimized".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub residence: ResidenceConfig,
    pub cluster: ClusterConfig,
    pub costs: CostsConfig,
    pub solver: SolverConfig,
    pub report: ReportConfig,
    pub synth: ScenarioSpec,
}

/// Sets `dotted.key` in `table`, parsing `raw` as a TOML value and falling
/// back to a plain string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override {assignment:?} is not of the form key=value"))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().ok_or("empty override key")?;
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry((*p).to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("override {key:?}: {p:?} is not a table"))?;
    }
    cur.insert((*last).to_owned(), value);
    Ok(())
}

impl PipelineConfig {
    /// Reads `path`, applies `key=value` overrides and resolves relative
    /// paths against the config file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(vec![format!("cannot read config {}: {e}", path.display())]))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| Failure::Config(vec![format!("{}: {e}", path.display())]))?;
        let mut issues = Vec::new();
        for o in overrides {
            if let Err(e) = apply_override(&mut table, o) {
                issues.push(e);
            }
        }
        if !issues.is_empty() {
            return Err(Failure::Config(issues));
        }
        let mut cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Failure::Config(vec![format!("{}: {}", path.display(), e.message())]))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        fix(&mut p.towers);
        fix(&mut p.calls);
        fix(&mut p.boundary);
        p.partitions.iter_mut().for_each(fix);
        fix(&mut p.current_facilities);
        fix(&mut p.cache_dir);
        fix(&mut p.output_dir);
    }

    /// Every configuration problem, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        v.extend(self.ingest.validate());
        v.extend(self.residence.validate());
        v.extend(self.cluster.validate());
        v.extend(self.solver.options().validate());
        if self.solver.m == 0 {
            v.push("solver.m must be >= 1".into());
        }
        if self.solver.m > self.cluster.total_k {
            v.push(format!(
                "solver.m ({}) exceeds cluster.total_k ({})",
                self.solver.m, self.cluster.total_k
            ));
        }
        if self.paths.partitions.is_empty() {
            v.push("paths.partitions must list at least one file".into());
        }
        match self.costs.provider {
            ProviderKind::Synthetic => {
                if !(self.costs.speed_mps.is_finite() && self.costs.speed_mps > 0.0) {
                    v.push("costs.speed_mps must be > 0".into());
                }
                if !(self.costs.wait_s.is_finite() && self.costs.wait_s >= 0.0) {
                    v.push("costs.wait_s must be >= 0".into());
                }
            }
            ProviderKind::Http => v.extend(self.costs.http.validate()),
        }
        v
    }
}
