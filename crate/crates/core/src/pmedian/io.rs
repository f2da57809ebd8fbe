//! Instance and solution files.
//!
//! Instance (text):
//!
//! ```text
//! mhcloc-pmedian 1
//! m <facility count>
//! costs <cost matrix cache path, relative to this file>
//! region_id,weight
//! <one row per region>
//! ```
//!
//! Solutions are JSON documents ([`SolutionFile`]) keyed by region id.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FacilitySolution, PMedianInstance, Proof};
use crate::costmatrix::load_matrix;
use crate::costmatrix::CostKind;
use crate::error::{Error, Result};

const INSTANCE_HEADER: &str = "mhcloc-pmedian 1";

/// Writes `inst` referencing an already saved cost matrix at `matrix_path`.
pub fn write_instance(inst: &PMedianInstance, matrix_path: &Path, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(INSTANCE_HEADER);
    out.push('\n');
    out.push_str(&format!("m {}\n", inst.m));
    let base = path.parent().unwrap_or(Path::new(""));
    let rel = matrix_path.strip_prefix(base).unwrap_or(matrix_path);
    out.push_str(&format!("costs {}\n", rel.display()));
    out.push_str("region_id,weight\n");
    for (label, w) in inst.labels.iter().zip(&inst.weights) {
        out.push_str(&format!("{label},{w}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_instance(path: &Path) -> Result<PMedianInstance> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| lines.next().ok_or_else(|| parse(0, format!("missing {what}")));

    let (ln, header) = next("header")?;
    if header.trim() != INSTANCE_HEADER {
        return Err(parse(ln, format!("expected header {INSTANCE_HEADER:?}")));
    }
    let (ln, m_line) = next("m line")?;
    let m = m_line
        .strip_prefix("m ")
        .and_then(|v| v.trim().parse::<usize>().ok())
        .ok_or_else(|| parse(ln, "expected `m <count>`".into()))?;
    let (ln, costs_line) = next("costs line")?;
    let rel = costs_line
        .strip_prefix("costs ")
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| parse(ln, "expected `costs <path>`".into()))?;
    let (ln, cols) = next("column header")?;
    if cols.trim() != "region_id,weight" {
        return Err(parse(ln, "expected `region_id,weight`".into()));
    }
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (id, w) = line
            .split_once(',')
            .ok_or_else(|| parse(ln, "expected `region_id,weight`".into()))?;
        labels.push(id.trim().parse::<usize>().map_err(|e| parse(ln, format!("region_id: {e}")))?);
        weights.push(w.trim().parse::<f64>().map_err(|e| parse(ln, format!("weight: {e}")))?);
    }
    let matrix_path: PathBuf = path.parent().unwrap_or(Path::new("")).join(rel);
    let costs = load_matrix(&matrix_path)?;
    PMedianInstance::new(m, weights, costs, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub region_id: usize,
    pub facility_region_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub cost_kind: CostKind,
    pub m: usize,
    pub n: usize,
    /// Region ids of the open facilities, ascending.
    pub open_region_ids: Vec<usize>,
    pub objective: f64,
    pub proof: Proof,
    pub lower_bound: f64,
    pub gap: f64,
    pub assignment: Vec<AssignmentRow>,
}

impl SolutionFile {
    pub fn new(inst: &PMedianInstance, sol: &FacilitySolution) -> Self {
        let mut open_region_ids: Vec<usize> = sol.open.iter().map(|&j| inst.labels[j]).collect();
        open_region_ids.sort_unstable();
        SolutionFile {
            cost_kind: inst.costs.kind,
            m: inst.m,
            n: inst.n(),
            open_region_ids,
            objective: sol.objective,
            proof: sol.proof,
            lower_bound: sol.lower_bound,
            gap: sol.gap,
            assignment: sol
                .assignment
                .iter()
                .enumerate()
                .map(|(i, &j)| AssignmentRow {
                    region_id: inst.labels[i],
                    facility_region_id: inst.labels[j],
                })
                .collect(),
        }
    }

    /// Maps the open region ids back to indices of `inst`.
    pub fn open_indices(&self, inst: &PMedianInstance) -> Result<Vec<usize>> {
        self.open_region_ids
            .iter()
            .map(|id| {
                inst.labels
                    .iter()
                    .position(|l| l == id)
                    .ok_or_else(|| Error::validation(format!("solution opens unknown region {id}")))
            })
            .collect()
    }
}

pub fn write_solution(file: &SolutionFile, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, file)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn read_solution(path: &Path) -> Result<SolutionFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
