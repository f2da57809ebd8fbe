//! Weighted Lloyd iterations with weighted k-means++ seeding.
//!
//! Weights enter both the objective and the centroid update. Zero-weight
//! points are assigned like any other point but never move a centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub seed: u64,
    pub max_iters: usize,
    /// Convergence threshold on the largest centroid move, in degrees.
    pub tol: f64,
    /// Independent seedings; the lowest final inertia wins.
    pub n_init: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            seed: 42,
            max_iters: 300,
            tol: 1e-7,
            n_init: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<GeoPoint>,
    /// Cluster index per input point.
    pub labels: Vec<usize>,
    /// Weighted inertia after each assignment step of the winning run.
    pub inertia_history: Vec<f64>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when every weight was zero and uniform weights were used instead.
    pub fell_back_to_unweighted: bool,
}

impl KMeansResult {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == cluster)
            .map(|(i, _)| i)
    }
}

fn nearest(p: &GeoPoint, centroids: &[GeoPoint]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = p.planar_dist2(c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Index whose cumulative score first exceeds `target`.
fn pick_by_cumulative(scores: impl Iterator<Item = f64>, target: f64) -> Option<usize> {
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, s) in scores.enumerate() {
        if s > 0.0 {
            acc += s;
            last_positive = Some(i);
            if acc > target {
                return Some(i);
            }
        }
    }
    last_positive
}

fn seed_centroids(points: &[GeoPoint], weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<GeoPoint> {
    let total: f64 = weights.iter().sum();
    let first = pick_by_cumulative(weights.iter().copied(), rng.gen::<f64>() * total).unwrap_or(0);
    let mut centroids = vec![points[first]];
    let mut chosen = vec![false; points.len()];
    chosen[first] = true;
    let mut d2: Vec<f64> = points.iter().map(|p| p.planar_dist2(&points[first])).collect();
    while centroids.len() < k {
        let total: f64 = weights.iter().zip(&d2).map(|(w, d)| w * d).sum();
        let u = rng.gen::<f64>();
        let pick = if total > 0.0 {
            pick_by_cumulative(weights.iter().zip(&d2).map(|(w, d)| w * d), u * total)
        } else {
            None
        };
        // All remaining mass sits on existing centroids: take the first unused point.
        let pick = pick.unwrap_or_else(|| chosen.iter().position(|c| !c).unwrap_or(0));
        chosen[pick] = true;
        let c = points[pick];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.planar_dist2(&c));
        }
    }
    centroids
}

fn lloyd(points: &[GeoPoint], weights: &[f64], mut centroids: Vec<GeoPoint>, opts: &KMeansOptions) -> KMeansResult {
    let k = centroids.len();
    let mut labels = vec![0usize; points.len()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            labels[i] = j;
            inertia += weights[i] * d;
        }
        history.push(inertia);
        if converged || iterations >= opts.max_iters {
            break;
        }
        iterations += 1;
        let mut sum = vec![(0.0f64, 0.0f64, 0.0f64); k];
        for (i, p) in points.iter().enumerate() {
            let s = &mut sum[labels[i]];
            s.0 += weights[i] * p.lat;
            s.1 += weights[i] * p.lon;
            s.2 += weights[i];
        }
        let mut shift = 0.0f64;
        for (c, (slat, slon, w)) in centroids.iter_mut().zip(sum) {
            if w > 0.0 {
                let next = GeoPoint {
                    lat: slat / w,
                    lon: slon / w,
                };
                shift = shift.max(next.planar_dist(c));
                *c = next;
            }
        }
        converged = shift < opts.tol;
    }
    let inertia = *history.last().expect("at least one assignment");
    KMeansResult {
        centroids,
        labels,
        inertia_history: history,
        inertia,
        iterations,
        converged,
        fell_back_to_unweighted: false,
    }
}

pub fn weighted_kmeans(points: &[(GeoPoint, f64)], k: usize, opts: &KMeansOptions) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::validation("k must be >= 1"));
    }
    if k > points.len() {
        return Err(Error::validation(format!("k = {k} exceeds the {} points", points.len())));
    }
    if let Some((p, w)) = points.iter().find(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::validation(format!("invalid weight {w} at {p:?}")));
    }
    let coords: Vec<GeoPoint> = points.iter().map(|(p, _)| *p).collect();
    let mut weights: Vec<f64> = points.iter().map(|(_, w)| *w).collect();
    let fell_back = weights.iter().all(|&w| w == 0.0);
    if fell_back {
        log::warn!("all k-means weights are zero; falling back to unweighted clustering");
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..opts.n_init.max(1) {
        let init = seed_centroids(&coords, &weights, k, &mut rng);
        let run = lloyd(&coords, &weights, init, opts);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut best = best.expect("n_init >= 1");
    best.fell_back_to_unweighted = fell_back;
    Ok(best)
}
