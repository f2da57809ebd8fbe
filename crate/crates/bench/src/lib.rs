//! Deterministic fixtures shared by the benchmarks.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use mhcloc::clustering::{weighted_kmeans, KMeansOptions};
pub use mhcloc::geo::{haversine_m, voronoi, BoundaryPolygon, GeoPoint};
pub use mhcloc::pmedian::{solve, PMedianInstance, SolveOptions};

use mhcloc::costmatrix::{CostKind, CostMatrix};

/// `n` points scattered over a 0.9° by 0.3° box.
pub fn random_points(n: usize, seed: u64) -> Vec<GeoPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| GeoPoint::new(rng.gen_range(40.95..41.25), rng.gen_range(28.55..29.45)).unwrap())
        .collect()
}

pub fn weighted_points(n: usize, seed: u64) -> Vec<(GeoPoint, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    random_points(n, seed).into_iter().map(|p| (p, rng.gen_range(1.0..100.0))).collect()
}

/// Geographic p-median instance with haversine costs.
pub fn geographic_instance(n: usize, m: usize, seed: u64) -> PMedianInstance {
    let pts = weighted_points(n, seed);
    let rows: Vec<Vec<f64>> = pts.iter().map(|(a, _)| pts.iter().map(|(b, _)| haversine_m(*a, *b)).collect()).collect();
    let departure = NaiveDate::from_ymd_opt(2017, 3, 6).unwrap().and_hms_opt(10, 0, 0).unwrap();
    let costs = CostMatrix::from_rows(CostKind::DistanceM, &rows, "bench", departure).unwrap();
    PMedianInstance::unlabelled(m, pts.iter().map(|(_, w)| *w).collect(), costs).unwrap()
}

pub fn study_box() -> BoundaryPolygon {
    let p = |lat, lon| GeoPoint::new(lat, lon).unwrap();
    let ring = vec![p(40.95, 28.55), p(40.95, 29.45), p(41.25, 29.45), p(41.25, 28.55), p(40.95, 28.55)];
    BoundaryPolygon::new("box", vec![ring]).unwrap()
}
