//! Travel-cost matrices between region centers.
//!
//! Matrices are directional (no symmetrization). Cells a provider fails to
//! return are flagged in `missing` and filled with the mean of the known
//! off-diagonal cells.

mod cache;
mod http;
mod synthetic;

use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

pub use cache::{load_matrix, save_matrix, CACHE_MAGIC, CACHE_VERSION};
pub use http::{Clock, HttpProvider, HttpProviderConfig, SystemClock, TokenBucket, Transport, UreqTransport};
pub use synthetic::SyntheticProvider;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostKind {
    #[serde(rename = "distance_m")]
    DistanceM,
    #[serde(rename = "duration_s")]
    DurationS,
}

impl CostKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CostKind::DistanceM => "distance_m",
            CostKind::DurationS => "duration_s",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "distance_m" => Some(CostKind::DistanceM),
            "duration_s" => Some(CostKind::DurationS),
            _ => None,
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub kind: CostKind,
    pub n: usize,
    /// Row-major `n * n` values; row = origin.
    pub values: Vec<f64>,
    /// Cells the provider did not supply (kept after imputation for audit).
    pub missing: Vec<bool>,
    pub provider: String,
    pub departure: NaiveDateTime,
}

impl CostMatrix {
    pub fn new(kind: CostKind, n: usize, provider: impl Into<String>, departure: NaiveDateTime) -> Self {
        CostMatrix {
            kind,
            n,
            values: vec![0.0; n * n],
            missing: vec![false; n * n],
            provider: provider.into(),
            departure,
        }
    }

    /// Builds a fully known matrix from rows.
    pub fn from_rows(kind: CostKind, rows: &[Vec<f64>], provider: impl Into<String>, departure: NaiveDateTime) -> Result<Self> {
        let n = rows.len();
        let mut m = CostMatrix::new(kind, n, provider, departure);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension { expected: n, found: row.len() });
            }
            m.values[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.missing[i * self.n + j]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Errors unless the matrix is `n x n`.
    pub fn expect_dim(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(Error::Dimension { expected: n, found: self.n });
        }
        Ok(())
    }

    /// Zero diagonal, every value finite and non-negative.
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.n * self.n || self.missing.len() != self.n * self.n {
            return Err(Error::validation("cost matrix storage does not match n"));
        }
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(Error::validation(format!("non-zero diagonal at {i}")));
            }
        }
        if let Some(pos) = self.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::validation(format!(
                "invalid cost {} at ({}, {})",
                self.values[pos],
                pos / self.n,
                pos % self.n
            )));
        }
        Ok(())
    }
}

/// Sets every missing off-diagonal cell to the mean of the known
/// off-diagonal cells. The diagonal never enters the mean.
pub fn impute_missing(m: &CostMatrix) -> Result<CostMatrix> {
    let n = m.n;
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut any_missing = false;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if m.is_missing(i, j) {
                any_missing = true;
            } else {
                sum += m.get(i, j);
                count += 1;
            }
        }
    }
    if !any_missing {
        return Ok(m.clone());
    }
    if count == 0 {
        return Err(Error::Provider(format!(
            "every off-diagonal {} cell is missing; nothing to impute from",
            m.kind
        )));
    }
    let mean = sum / count as f64;
    let mut out = m.clone();
    for i in 0..n {
        for j in 0..n {
            if i != j && m.is_missing(i, j) {
                out.values[i * n + j] = mean;
            }
        }
    }
    Ok(out)
}

/// One origin-destination answer from a provider.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostCell {
    pub distance_m: f64,
    pub duration_s: f64,
}

/// `origins.len() x destinations.len()` answers; `None` marks an absent cell.
pub type PartialMatrix = Vec<Vec<Option<CostCell>>>;

pub trait CostProvider {
    fn label(&self) -> String;

    /// Largest (origins, destinations) block accepted by one query.
    fn max_block(&self) -> (usize, usize) {
        (usize::MAX, usize::MAX)
    }

    fn query(&mut self, origins: &[GeoPoint], destinations: &[GeoPoint], departure: NaiveDateTime) -> Result<PartialMatrix>;
}

fn valid_cell(c: &CostCell) -> bool {
    c.distance_m.is_finite() && c.distance_m >= 0.0 && c.duration_s.is_finite() && c.duration_s >= 0.0
}

/// Queries every ordered pair of centers in provider-sized blocks and
/// returns the imputed `(distance, duration)` matrices. A failed block only
/// marks its cells missing; failure of every block is fatal.
pub fn build_matrices(
    centers: &[GeoPoint],
    provider: &mut dyn CostProvider,
    departure: NaiveDateTime,
) -> Result<(CostMatrix, CostMatrix)> {
    let n = centers.len();
    if n < 2 {
        return Err(Error::validation("need at least two centers for a cost matrix"));
    }
    let label = provider.label();
    let mut dist = CostMatrix::new(CostKind::DistanceM, n, label.clone(), departure);
    let mut dur = CostMatrix::new(CostKind::DurationS, n, label, departure);
    dist.missing.iter_mut().for_each(|m| *m = true);
    dur.missing.iter_mut().for_each(|m| *m = true);

    let (bo, bd) = provider.max_block();
    let (bo, bd) = (bo.clamp(1, n), bd.clamp(1, n));
    let mut blocks = 0usize;
    let mut failed = 0usize;
    for o0 in (0..n).step_by(bo) {
        let o1 = (o0 + bo).min(n);
        for d0 in (0..n).step_by(bd) {
            let d1 = (d0 + bd).min(n);
            blocks += 1;
            match provider.query(&centers[o0..o1], &centers[d0..d1], departure) {
                Ok(block) => {
                    for (bi, row) in block.iter().enumerate().take(o1 - o0) {
                        for (bj, cell) in row.iter().enumerate().take(d1 - d0) {
                            if let Some(c) = cell.filter(valid_cell) {
                                let idx = (o0 + bi) * n + d0 + bj;
                                dist.values[idx] = c.distance_m;
                                dur.values[idx] = c.duration_s;
                                dist.missing[idx] = false;
                                dur.missing[idx] = false;
                            }
                        }
                    }
                }
                Err(e) => {
                    failed += 1;
                    log::warn!("cost query for origins {o0}..{o1}, destinations {d0}..{d1} failed: {e}");
                }
            }
        }
    }
    if failed == blocks {
        return Err(Error::Provider(format!("all {blocks} cost queries failed")));
    }
    for i in 0..n {
        let idx = i * n + i;
        for m in [&mut dist, &mut dur] {
            m.values[idx] = 0.0;
            m.missing[idx] = false;
        }
    }
    Ok((impute_missing(&dist)?, impute_missing(&dur)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn departure() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2018, 12, 10).unwrap().and_hms_opt(10, 0, 0).unwrap()
    }

    fn with_missing(rows: &[Vec<Option<f64>>]) -> CostMatrix {
        let n = rows.len();
        let mut m = CostMatrix::new(CostKind::DistanceM, n, "test", departure());
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                match v {
                    Some(v) => m.values[i * n + j] = *v,
                    None => m.missing[i * n + j] = true,
                }
            }
        }
        m
    }

    #[test]
    fn mean_of_known_off_diagonal_cells() {
        let m = with_missing(&[
            vec![Some(0.0), Some(10.0), Some(20.0)],
            vec![Some(30.0), Some(0.0), None],
            vec![Some(40.0), Some(50.0), Some(0.0)],
        ]);
        let out = impute_missing(&m).unwrap();
        assert_eq!(out.get(1, 2), 30.0);
        assert!(out.is_missing(1, 2));
        assert_eq!(out.get(0, 0), 0.0);
    }

    #[test]
    fn no_missing_is_identity() {
        let m = with_missing(&[vec![Some(0.0), Some(3.0)], vec![Some(4.0), Some(0.0)]]);
        assert_eq!(impute_missing(&m).unwrap(), m);
    }

    #[test]
    fn single_missing_in_two_by_two() {
        let m = with_missing(&[vec![Some(0.0), Some(7.5)], vec![None, Some(0.0)]]);
        assert_eq!(impute_missing(&m).unwrap().get(1, 0), 7.5);
    }

    #[test]
    fn all_missing_is_fatal() {
        let m = with_missing(&[vec![Some(0.0), None], vec![None, Some(0.0)]]);
        assert!(impute_missing(&m).is_err());
    }

    #[test]
    fn imputation_is_idempotent() {
        let m = with_missing(&[
            vec![Some(0.0), None, Some(2.0), Some(9.0)],
            vec![Some(1.0), Some(0.0), None, Some(4.0)],
            vec![None, Some(6.0), Some(0.0), Some(3.0)],
            vec![Some(8.0), Some(5.0), Some(7.0), Some(0.0)],
        ]);
        let once = impute_missing(&m).unwrap();
        assert_eq!(impute_missing(&once).unwrap(), once);
    }

    /// Provider with scripted holes and failing blocks.
    struct Holey {
        fail_origin_block: Option<usize>,
        hole: Option<(usize, usize)>,
        calls: Vec<(usize, usize)>,
        all_points: Vec<GeoPoint>,
    }

    impl CostProvider for Holey {
        fn label(&self) -> String {
            "holey".into()
        }
        fn max_block(&self) -> (usize, usize) {
            (2, 3)
        }
        fn query(&mut self, o: &[GeoPoint], d: &[GeoPoint], _: NaiveDateTime) -> Result<PartialMatrix> {
            let idx = |p: &GeoPoint| self.all_points.iter().position(|q| q == p).unwrap();
            let (oi, di) = (idx(&o[0]), idx(&d[0]));
            self.calls.push((oi, di));
            if Some(oi / 2) == self.fail_origin_block {
                return Err(Error::Provider("boom".into()));
            }
            Ok(o.iter()
                .map(|a| {
                    d.iter()
                        .map(|b| {
                            let (i, j) = (idx(a), idx(b));
                            if Some((i, j)) == self.hole {
                                None
                            } else {
                                Some(CostCell { distance_m: (10 * i + j) as f64, duration_s: (i + j) as f64 })
                            }
                        })
                        .collect()
                })
                .collect())
        }
    }

    fn points(n: usize) -> Vec<GeoPoint> {
        (0..n).map(|i| GeoPoint { lat: 41.0, lon: 28.0 + i as f64 * 0.01 }).collect()
    }

    #[test]
    fn batches_cover_every_pair_and_flag_holes() {
        let pts = points(5);
        let mut p = Holey { fail_origin_block: None, hole: Some((3, 1)), calls: vec![], all_points: pts.clone() };
        let (d, t) = build_matrices(&pts, &mut p, departure()).unwrap();
        // 3 origin blocks x 2 destination blocks.
        assert_eq!(p.calls.len(), 6);
        assert!(d.is_missing(3, 1) && t.is_missing(3, 1));
        assert_eq!(d.missing_count(), 1);
        assert_eq!(d.get(2, 4), 24.0);
        for i in 0..5 {
            assert_eq!(d.get(i, i), 0.0);
            assert_eq!(t.get(i, i), 0.0);
        }
        d.validate().unwrap();
        t.validate().unwrap();
    }

    #[test]
    fn failed_block_marks_cells_missing() {
        let pts = points(4);
        let mut p = Holey { fail_origin_block: Some(0), hole: None, calls: vec![], all_points: pts.clone() };
        let (d, _) = build_matrices(&pts, &mut p, departure()).unwrap();
        // Origins 0 and 1 failed: 2 rows x 3 off-diagonal cells.
        assert_eq!(d.missing_count(), 6);
        assert!(!d.is_missing(0, 0));
    }

    #[test]
    fn total_failure_is_fatal() {
        let pts = points(2);
        let mut p = Holey { fail_origin_block: Some(0), hole: None, calls: vec![], all_points: pts.clone() };
        assert!(matches!(build_matrices(&pts, &mut p, departure()), Err(Error::Provider(_))));
    }

    #[test]
    fn needs_two_centers() {
        let pts = points(1);
        let mut p = SyntheticProvider::new(10.0).unwrap();
        assert!(build_matrices(&pts, &mut p, departure()).is_err());
    }
}
