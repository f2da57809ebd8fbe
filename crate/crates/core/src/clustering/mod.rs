//! Resident-weighted clustering of tower sites into residential regions.

mod kmeans;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use kmeans::{weighted_kmeans, KMeansOptions, KMeansResult};

use crate::error::{Error, Result};
use crate::geo::{voronoi_unchecked, BoundaryPolygon, GeoPoint, VoronoiCell};
use crate::ingest::{CallRecord, Partition, TowerId, TowerSite};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub total_k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub n_init: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let km = KMeansOptions::default();
        ClusterConfig {
            total_k: 200,
            seed: km.seed,
            max_iters: km.max_iters,
            tol: km.tol,
            n_init: km.n_init,
        }
    }
}

impl ClusterConfig {
    pub fn kmeans_options(&self) -> KMeansOptions {
        KMeansOptions {
            seed: self.seed,
            max_iters: self.max_iters,
            tol: self.tol,
            n_init: self.n_init,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.total_k == 0 {
            v.push("cluster.total_k must be >= 1".to_owned());
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            v.push(format!("cluster.tol must be >= 0 (got {})", self.tol));
        }
        if self.n_init == 0 {
            v.push("cluster.n_init must be >= 1".to_owned());
        }
        v
    }
}

/// Splits `total_k` across keys in proportion to `counts` using the
/// largest-remainder method (exact integer arithmetic, ties to the smaller
/// key), then lifts any zero allocation to one.
pub fn allocate_k<K: Ord + Clone>(total_k: usize, counts: &BTreeMap<K, u64>) -> Result<BTreeMap<K, usize>> {
    if counts.is_empty() {
        return Err(Error::validation("no partitions to allocate clusters to"));
    }
    if total_k < counts.len() {
        return Err(Error::validation(format!(
            "total_k = {total_k} is smaller than the {} partitions",
            counts.len()
        )));
    }
    if counts.values().any(|&c| c == 0) {
        return Err(Error::validation("every partition needs positive call activity"));
    }
    let sum: u128 = counts.values().map(|&c| c as u128).sum();
    let mut alloc: Vec<(K, usize, u128)> = counts
        .iter()
        .map(|(key, &c)| {
            let scaled = total_k as u128 * c as u128;
            (key.clone(), (scaled / sum) as usize, scaled % sum)
        })
        .collect();
    let assigned: usize = alloc.iter().map(|a| a.1).sum();
    let mut order: Vec<usize> = (0..alloc.len()).collect();
    order.sort_by(|&a, &b| alloc[b].2.cmp(&alloc[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(total_k - assigned) {
        alloc[i].1 += 1;
    }
    while let Some(zero) = alloc.iter().position(|a| a.1 == 0) {
        let donor = (0..alloc.len())
            .filter(|&i| alloc[i].1 > 1)
            .max_by(|&a, &b| alloc[a].1.cmp(&alloc[b].1).then(b.cmp(&a)))
            .expect("total_k >= partitions guarantees a donor");
        alloc[donor].1 -= 1;
        alloc[zero].1 = 1;
    }
    Ok(alloc.into_iter().map(|(k, n, _)| (k, n)).collect())
}

/// Number of calls per partition, attributing each call to its tower's side.
pub fn partition_activity(calls: &[CallRecord], towers: &[TowerSite]) -> BTreeMap<Partition, u64> {
    let side: BTreeMap<&TowerId, Partition> = towers.iter().map(|t| (&t.tower_id, t.partition)).collect();
    let mut out = BTreeMap::new();
    for c in calls {
        if let Some(p) = side.get(&c.tower_id) {
            *out.entry(*p).or_insert(0) += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidentialRegion {
    pub region_id: usize,
    pub center: GeoPoint,
    /// Sum of member towers' expected residents.
    pub weight: f64,
    pub partition: Partition,
    pub member_tower_ids: Vec<TowerId>,
    /// Voronoi cell among all region centers; empty when read back from CSV.
    pub polygon: VoronoiCell,
}

/// Clusters each partition separately with its share of `total_k`, then
/// tessellates the boundary by the resulting centers.
pub fn build_regions(
    towers: &[TowerSite],
    expected_residents: &BTreeMap<TowerId, f64>,
    activity: &BTreeMap<Partition, u64>,
    cfg: &ClusterConfig,
    boundary: &BoundaryPolygon,
) -> Result<Vec<ResidentialRegion>> {
    if let Some(issue) = cfg.validate().into_iter().next() {
        return Err(Error::Validation(issue));
    }
    let mut by_side: BTreeMap<Partition, Vec<&TowerSite>> = BTreeMap::new();
    for t in towers {
        if !activity.contains_key(&t.partition) {
            return Err(Error::validation(format!(
                "tower {} lies in partition {} which has no call activity",
                t.tower_id, t.partition
            )));
        }
        by_side.entry(t.partition).or_default().push(t);
    }
    for p in activity.keys() {
        if !by_side.contains_key(p) {
            return Err(Error::validation(format!("partition {p} has no towers")));
        }
    }
    let ks = allocate_k(cfg.total_k, activity)?;
    let opts = cfg.kmeans_options();

    let mut regions = Vec::with_capacity(cfg.total_k);
    for (side, members) in &by_side {
        let k = ks[side];
        let points: Vec<(GeoPoint, f64)> = members
            .iter()
            .map(|t| (t.location, expected_residents.get(&t.tower_id).copied().unwrap_or(0.0)))
            .collect();
        let km = weighted_kmeans(&points, k, &opts)?;
        for (c, center) in km.centroids.iter().enumerate() {
            let member_ids: Vec<TowerId> = km.members(c).map(|i| members[i].tower_id.clone()).collect();
            let weight = km.members(c).map(|i| points[i].1).sum();
            regions.push(ResidentialRegion {
                region_id: regions.len(),
                center: *center,
                weight,
                partition: *side,
                member_tower_ids: member_ids,
                polygon: VoronoiCell { rings: Vec::new() },
            });
        }
    }

    let centers: Vec<GeoPoint> = regions.iter().map(|r| r.center).collect();
    let distinct: BTreeSet<(u64, u64)> = centers.iter().map(|p| (p.lon.to_bits(), p.lat.to_bits())).collect();
    if distinct.len() != centers.len() {
        return Err(Error::validation("two region centers coincide; lower total_k"));
    }
    for r in &regions {
        if !boundary.contains(&r.center) {
            log::warn!("region {} center lies outside the boundary; its cell may be empty", r.region_id);
        }
    }
    let diagram = voronoi_unchecked(&centers, boundary);
    for (r, cell) in regions.iter_mut().zip(diagram.cells) {
        r.polygon = cell;
    }
    Ok(regions)
}

/// Writes `region_id,lat,lon,weight,partition,member_tower_ids`.
pub fn write_regions(regions: &[ResidentialRegion], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["region_id", "lat", "lon", "weight", "partition", "member_tower_ids"])?;
    for r in regions {
        let members: Vec<&str> = r.member_tower_ids.iter().map(|t| t.0.as_str()).collect();
        wr.write_record([
            r.region_id.to_string(),
            r.center.lat.to_string(),
            r.center.lon.to_string(),
            r.weight.to_string(),
            r.partition.to_string(),
            members.join(";"),
        ])?;
    }
    wr.flush().map_err(|e| Error::io("<regions>", e))?;
    Ok(())
}

pub fn read_regions(path: &Path) -> Result<Vec<ResidentialRegion>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::Parse {
            path: path.into(),
            line: i + 2,
            message: m.to_owned(),
        };
        if rec.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let num = |j: usize| rec[j].parse::<f64>().map_err(|_| bad("not a number"));
        out.push(ResidentialRegion {
            region_id: rec[0].parse().map_err(|_| bad("bad region_id"))?,
            center: GeoPoint::new(num(1)?, num(2)?).map_err(|e| bad(&e.to_string()))?,
            weight: num(3)?,
            partition: rec[4].parse().map_err(|_| bad("bad partition"))?,
            member_tower_ids: rec[5].split(';').filter(|s| !s.is_empty()).map(|s| TowerId(s.to_owned())).collect(),
            polygon: VoronoiCell { rings: Vec::new() },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(&'static str, u64)]) -> BTreeMap<&'static str, u64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn seventy_one_thirty_split() {
        let k = allocate_k(200, &counts(&[("asia", 35), ("europe", 65)])).unwrap();
        assert_eq!(k["asia"], 70);
        assert_eq!(k["europe"], 130);
    }

    #[test]
    fn even_split_of_two() {
        let k = allocate_k(2, &counts(&[("a", 1), ("b", 1)])).unwrap();
        assert_eq!((k["a"], k["b"]), (1, 1));
    }

    #[test]
    fn largest_remainder() {
        // 2.6 and 7.4 floor to 2 and 7; the spare unit goes to the larger remainder.
        let k = allocate_k(10, &counts(&[("a", 26), ("b", 74)])).unwrap();
        assert_eq!((k["a"], k["b"]), (3, 7));
    }

    #[test]
    fn tiny_share_still_gets_one() {
        let k = allocate_k(5, &counts(&[("a", 1), ("b", 10_000)])).unwrap();
        assert_eq!((k["a"], k["b"]), (1, 4));
    }

    #[test]
    fn allocation_rejects_bad_input() {
        assert!(allocate_k(1, &counts(&[("a", 1), ("b", 1)])).is_err());
        assert!(allocate_k(4, &counts(&[("a", 0), ("b", 1)])).is_err());
    }

    fn tower(id: &str, lat: f64, lon: f64, p: Partition) -> TowerSite {
        TowerSite {
            tower_id: TowerId::from(id),
            location: GeoPoint { lat, lon },
            merged_site_ids: vec![id.into()],
            partition: p,
        }
    }

    fn square() -> BoundaryPolygon {
        BoundaryPolygon::rectangle("city", GeoPoint { lat: 0.0, lon: 0.0 }, GeoPoint { lat: 1.0, lon: 2.0 }).unwrap()
    }

    #[test]
    fn single_region_takes_all_weight() {
        let towers = vec![tower("a", 0.2, 0.2, Partition::Europe), tower("b", 0.8, 0.6, Partition::Europe)];
        let res: BTreeMap<TowerId, f64> = [(TowerId::from("a"), 2.5), (TowerId::from("b"), 0.5)].into();
        let activity = [(Partition::Europe, 10u64)].into();
        let cfg = ClusterConfig { total_k: 1, ..Default::default() };
        let regions = build_regions(&towers, &res, &activity, &cfg, &square()).unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].weight, 3.0);
        assert_eq!(regions[0].member_tower_ids.len(), 2);
        assert!((regions[0].polygon.area() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn partition_without_towers_rejected() {
        let towers = vec![tower("a", 0.2, 0.2, Partition::Europe)];
        let activity = [(Partition::Europe, 10u64), (Partition::Asia, 5)].into();
        let cfg = ClusterConfig { total_k: 2, ..Default::default() };
        let err = build_regions(&towers, &BTreeMap::new(), &activity, &cfg, &square()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn regions_respect_partitions_and_conserve_mass() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut towers = Vec::new();
        let mut res = BTreeMap::new();
        for i in 0..120 {
            let lon: f64 = rng.gen::<f64>() * 2.0;
            let p = if lon < 1.0 { Partition::Europe } else { Partition::Asia };
            let t = tower(&format!("t{i:03}"), rng.gen(), lon, p);
            res.insert(t.tower_id.clone(), rng.gen::<f64>() * 10.0);
            towers.push(t);
        }
        let activity = [(Partition::Europe, 65u64), (Partition::Asia, 35)].into();
        let cfg = ClusterConfig { total_k: 20, ..Default::default() };
        let regions = build_regions(&towers, &res, &activity, &cfg, &square()).unwrap();
        let per_side = |p| regions.iter().filter(|r| r.partition == p).count();
        assert_eq!(per_side(Partition::Europe), 13);
        assert_eq!(per_side(Partition::Asia), 7);
        let side: BTreeMap<_, _> = towers.iter().map(|t| (t.tower_id.clone(), t.partition)).collect();
        for r in &regions {
            assert!(r.member_tower_ids.iter().all(|t| side[t] == r.partition));
        }
        let total: f64 = res.values().sum();
        let region_total: f64 = regions.iter().map(|r| r.weight).sum();
        assert!((total - region_total).abs() < 1e-6);
        let area: f64 = regions.iter().map(|r| r.polygon.area()).sum();
        assert!((area - 2.0).abs() < 1e-9);
    }

    #[test]
    fn regions_csv_round_trip() {
        let towers = vec![tower("a", 0.2, 0.2, Partition::Europe), tower("b", 0.8, 1.6, Partition::Asia)];
        let res: BTreeMap<TowerId, f64> = [(TowerId::from("a"), 1.0 / 3.0)].into();
        let activity = [(Partition::Europe, 1u64), (Partition::Asia, 1)].into();
        let cfg = ClusterConfig { total_k: 2, ..Default::default() };
        let regions = build_regions(&towers, &res, &activity, &cfg, &square()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_regions(&regions, std::fs::File::create(&p).unwrap()).unwrap();
        let back = read_regions(&p).unwrap();
        for (a, b) in regions.iter().zip(&back) {
            assert_eq!(a.center, b.center);
            assert_eq!(a.weight, b.weight);
            assert_eq!(a.member_tower_ids, b.member_tower_ids);
        }
    }
}
