//! Coordinates, distances, polygons and bounded Voronoi tessellation.
//!
//! Planar computations (Voronoi, point-in-polygon, k-means) treat `(lon, lat)`
//! as Euclidean `(x, y)`. Physical distances go through [`haversine_m`].

mod dms;
pub mod geojson;
mod polygon;
mod voronoi;

pub use dms::{dms_to_decimal, DmsCoordinate, Hemisphere};
pub use polygon::{load_boundaries, ring_signed_area, BoundaryPolygon};
pub use voronoi::{voronoi, voronoi_unchecked, VoronoiCell, VoronoiDiagram};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::validation(format!("non-finite coordinate ({lat}, {lon})")));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::validation(format!("latitude {lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::validation(format!("longitude {lon} outside [-180, 180]")));
        }
        Ok(GeoPoint { lat, lon })
    }

    /// Squared planar distance on the (lon, lat) plane.
    #[inline]
    pub fn planar_dist2(&self, other: &GeoPoint) -> f64 {
        let dx = self.lon - other.lon;
        let dy = self.lat - other.lat;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn planar_dist(&self, other: &GeoPoint) -> f64 {
        self.planar_dist2(other).sqrt()
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn haversine_identity_is_zero() {
        let p = GeoPoint::new(41.0, 29.0).unwrap();
        assert_eq!(haversine_m(p, p), 0.0);
    }

    #[test]
    fn haversine_one_degree_of_longitude_on_equator() {
        let expected = 2.0 * std::f64::consts::PI * EARTH_RADIUS_M / 360.0;
        let d = haversine_m(GeoPoint::new(0.0, 0.0).unwrap(), GeoPoint::new(0.0, 1.0).unwrap());
        assert!((d - expected).abs() < 1e-6, "{d} vs {expected}");
        assert!((d - 111_195.0).abs() < 1.0);
    }

    #[test]
    fn rejects_out_of_range_points() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn haversine_is_symmetric(
            lat1 in -90.0f64..90.0, lon1 in -180.0f64..180.0,
            lat2 in -90.0f64..90.0, lon2 in -180.0f64..180.0,
        ) {
            let a = GeoPoint::new(lat1, lon1).unwrap();
            let b = GeoPoint::new(lat2, lon2).unwrap();
            prop_assert_eq!(haversine_m(a, b), haversine_m(b, a));
            prop_assert!(haversine_m(a, b) >= 0.0);
        }
    }
}
