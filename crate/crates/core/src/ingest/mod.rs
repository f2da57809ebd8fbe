//! Tower and call-record ingestion.
//!
//! Input schemas (comma separated, header row required):
//!
//! * towers: `site_id,lat,lon,city,district`. `lat`/`lon` are decimal degrees
//!   or DMS text (`41d00m36.5sN`, `41°00'36.5"N`, `41 0 36.5 N`). Both empty
//!   means the site has no coordinates.
//! * calls: `caller_id,caller_group,callee_group,event_type,call_type,timestamp,site_id`
//!   with `caller_group`/`callee_group` in `refugee|non-refugee`, `event_type`
//!   in `voice|sms`, `call_type` in `in|out` and `timestamp` as
//!   `YYYY-MM-DD HH:MM:SS` local time.

mod calls;
mod dbscan;
mod towers;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use calls::{parse_calls, TIMESTAMP_FORMAT, read_joined_calls, write_joined_calls, CallIngest, CallRecord, CallStats, CallerGroup};
pub use dbscan::dbscan;
pub use towers::{
    clean_towers, parse_towers, read_tower_sites, write_tower_sites, CleanedTowers, RawTowerRecord, TowerSite,
};

use crate::error::{Error, Result};
use crate::geo::{load_boundaries, BoundaryPolygon, GeoPoint};

/// Canonical identifier of a (possibly merged) tower site.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TowerId(pub String);

impl fmt::Display for TowerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TowerId {
    fn from(s: &str) -> Self {
        TowerId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Europe,
    Asia,
}

impl Partition {
    pub const ALL: [Partition; 2] = [Partition::Europe, Partition::Asia];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Europe => "europe",
            Partition::Asia => "asia",
        }
    }

    /// Matches polygon feature names such as `europe-side` or `Asia`.
    pub fn from_polygon_name(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        if lower.contains("europe") {
            Some(Partition::Europe)
        } else if lower.contains("asia") {
            Some(Partition::Asia)
        } else {
            None
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "europe" => Ok(Partition::Europe),
            "asia" => Ok(Partition::Asia),
            other => Err(Error::validation(format!("unknown partition {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// DBSCAN radius in coordinate degrees.
    pub dbscan_epsilon: f64,
    pub dbscan_min_points: usize,
    pub parse_mode: ParseMode,
    /// Inclusive first and last day of the dataset; calls outside are dropped.
    pub period: Option<(NaiveDate, NaiveDate)>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            dbscan_epsilon: 0.0005,
            dbscan_min_points: 1,
            parse_mode: ParseMode::Lenient,
            period: None,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if !(self.dbscan_epsilon.is_finite() && self.dbscan_epsilon > 0.0) {
            issues.push(format!("ingest.dbscan_epsilon must be > 0 (got {})", self.dbscan_epsilon));
        }
        if self.dbscan_min_points < 1 {
            issues.push("ingest.dbscan_min_points must be >= 1".to_owned());
        }
        if let Some((a, b)) = self.period {
            if b < a {
                issues.push(format!("ingest.period ends ({b}) before it starts ({a})"));
            }
        }
        issues
    }
}

/// The city boundary plus one polygon per partition.
#[derive(Debug, Clone)]
pub struct StudyArea {
    pub boundary: BoundaryPolygon,
    pub partitions: Vec<(Partition, BoundaryPolygon)>,
}

impl StudyArea {
    pub fn new(boundary: BoundaryPolygon, partitions: Vec<BoundaryPolygon>) -> Result<Self> {
        let mut tagged = Vec::new();
        for poly in partitions {
            let p = Partition::from_polygon_name(&poly.name).ok_or_else(|| {
                Error::validation(format!("partition polygon {:?} names neither europe nor asia", poly.name))
            })?;
            tagged.push((p, poly));
        }
        if tagged.is_empty() {
            return Err(Error::validation("no partition polygons supplied"));
        }
        tagged.sort_by_key(|(p, _)| *p);
        Ok(StudyArea {
            boundary,
            partitions: tagged,
        })
    }

    /// Loads the first feature of `boundary_file` as the study boundary and
    /// every feature of `partition_files` as partition polygons.
    pub fn load(boundary_file: &Path, partition_files: &[PathBuf]) -> Result<Self> {
        let boundary = load_boundaries(boundary_file)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::validation(format!("{} has no features", boundary_file.display())))?;
        let mut parts = Vec::new();
        for f in partition_files {
            parts.extend(load_boundaries(f)?);
        }
        Self::new(boundary, parts)
    }

    /// First partition (in enum order) whose polygon contains `p`.
    pub fn partition_of(&self, p: &GeoPoint) -> Option<Partition> {
        self.partitions.iter().find(|(_, poly)| poly.contains(p)).map(|(part, _)| *part)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    pub path: PathBuf,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.path.display(), self.line, self.message)
    }
}

/// Line-oriented error report (`file:line: message`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ErrorReport {
    pub entries: Vec<ParseIssue>,
}

impl ErrorReport {
    pub fn push(&mut self, path: &Path, line: usize, message: impl Into<String>) {
        self.entries.push(ParseIssue {
            path: path.to_owned(),
            line,
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }
}

/// Site id to canonical tower id, built from `merged_site_ids`.
pub fn site_index(towers: &[TowerSite]) -> BTreeMap<String, TowerId> {
    towers
        .iter()
        .flat_map(|t| t.merged_site_ids.iter().map(move |s| (s.clone(), t.tower_id.clone())))
        .collect()
}
