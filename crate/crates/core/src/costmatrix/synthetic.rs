use chrono::NaiveDateTime;

use super::{CostCell, CostProvider, PartialMatrix};
use crate::error::{Error, Result};
use crate::geo::{haversine_m, GeoPoint};

/// Offline provider: great-circle distance and a constant travel speed,
/// optionally plus a fixed boarding/waiting time on every non-trivial trip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticProvider {
    pub speed_mps: f64,
    pub wait_s: f64,
}

impl SyntheticProvider {
    pub fn new(speed_mps: f64) -> Result<Self> {
        Self::with_wait(speed_mps, 0.0)
    }

    pub fn with_wait(speed_mps: f64, wait_s: f64) -> Result<Self> {
        if !(speed_mps.is_finite() && speed_mps > 0.0) {
            return Err(Error::validation(format!("speed must be > 0 (got {speed_mps})")));
        }
        if !(wait_s.is_finite() && wait_s >= 0.0) {
            return Err(Error::validation(format!("wait must be >= 0 (got {wait_s})")));
        }
        Ok(SyntheticProvider { speed_mps, wait_s })
    }

    pub fn cell(&self, a: GeoPoint, b: GeoPoint) -> CostCell {
        let distance_m = haversine_m(a, b);
        let duration_s = if distance_m == 0.0 {
            0.0
        } else {
            distance_m / self.speed_mps + self.wait_s
        };
        CostCell { distance_m, duration_s }
    }
}

impl CostProvider for SyntheticProvider {
    fn label(&self) -> String {
        format!("synthetic(speed_mps={},wait_s={})", self.speed_mps, self.wait_s)
    }

    fn query(&mut self, origins: &[GeoPoint], destinations: &[GeoPoint], _: NaiveDateTime) -> Result<PartialMatrix> {
        Ok(origins
            .iter()
            .map(|&a| destinations.iter().map(|&b| Some(self.cell(a, b))).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmatrix::build_matrices;
    use crate::geo::EARTH_RADIUS_M;
    use chrono::NaiveDate;

    #[test]
    fn speed_arithmetic() {
        // 1000 m due north: dlat = 1000 / R radians.
        let a = GeoPoint { lat: 41.0, lon: 29.0 };
        let b = GeoPoint { lat: 41.0 + (1000.0 / EARTH_RADIUS_M).to_degrees(), lon: 29.0 };
        let c = SyntheticProvider::new(10.0).unwrap().cell(a, b);
        assert!((c.distance_m - 1000.0).abs() < 1e-6);
        assert!((c.duration_s - 100.0).abs() < 1e-7);
    }

    #[test]
    fn same_point_is_free() {
        let a = GeoPoint { lat: 41.0, lon: 29.0 };
        let c = SyntheticProvider::with_wait(10.0, 300.0).unwrap().cell(a, a);
        assert_eq!((c.distance_m, c.duration_s), (0.0, 0.0));
    }

    #[test]
    fn symmetric_and_complete() {
        let pts = [
            GeoPoint { lat: 41.0, lon: 29.0 },
            GeoPoint { lat: 41.1, lon: 28.9 },
            GeoPoint { lat: 40.95, lon: 29.2 },
        ];
        let mut p = SyntheticProvider::new(8.0).unwrap();
        let dep = NaiveDate::from_ymd_opt(2018, 12, 10).unwrap().and_hms_opt(10, 0, 0).unwrap();
        let (d, t) = build_matrices(&pts, &mut p, dep).unwrap();
        assert_eq!(d.missing_count(), 0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d.get(i, j), d.get(j, i));
                assert_eq!(t.get(i, j), t.get(j, i));
            }
        }
    }

    #[test]
    fn rejects_non_positive_speed() {
        assert!(SyntheticProvider::new(0.0).is_err());
        assert!(SyntheticProvider::new(-1.0).is_err());
        assert!(SyntheticProvider::with_wait(1.0, -5.0).is_err());
    }
}
