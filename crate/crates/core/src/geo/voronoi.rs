//! Voronoi cells clipped to a boundary polygon.
//!
//! Each cell is built by intersecting a bounding box with the bisector
//! half-planes of nearby sites (nearest first, stopping once no farther site
//! can cut the cell), then clipping every ring of the boundary against the
//! resulting convex region.

use super::{ring_signed_area, BoundaryPolygon, GeoPoint};
use crate::error::{Error, Result};

/// One cell: zero or more closed rings (outer rings CCW, holes CW).
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiCell {
    pub rings: Vec<Vec<GeoPoint>>,
}

impl VoronoiCell {
    pub fn area(&self) -> f64 {
        self.rings.iter().map(|r| ring_signed_area(&r[..r.len() - 1])).sum()
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        if self.rings.is_empty() {
            return false;
        }
        let poly = BoundaryPolygon {
            name: String::new(),
            rings: self.rings.clone(),
        };
        poly.contains(p)
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct VoronoiDiagram {
    pub sites: Vec<GeoPoint>,
    pub cells: Vec<VoronoiCell>,
}

impl VoronoiDiagram {
    /// Index of the cell containing `p`, if any.
    pub fn locate(&self, p: &GeoPoint) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(p))
    }
}

/// Keeps the side of the line through `m` with normal `n` where `(p - m)·n <= 0`.
fn clip_half_plane(poly: &[GeoPoint], m: GeoPoint, n: (f64, f64)) -> Vec<GeoPoint> {
    let side = |p: &GeoPoint| (p.lon - m.lon) * n.0 + (p.lat - m.lat) * n.1;
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let (sc, sn) = (side(&cur), side(&next));
        if sc <= 0.0 {
            out.push(cur);
        }
        if (sc < 0.0 && sn > 0.0) || (sc > 0.0 && sn < 0.0) {
            let t = sc / (sc - sn);
            out.push(GeoPoint {
                lon: cur.lon + t * (next.lon - cur.lon),
                lat: cur.lat + t * (next.lat - cur.lat),
            });
        }
    }
    out.dedup();
    if out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

fn close(mut ring: Vec<GeoPoint>) -> Vec<GeoPoint> {
    ring.push(ring[0]);
    ring
}

fn convex_cell(sites: &[GeoPoint], i: usize, order: &mut Vec<usize>, frame: &[GeoPoint]) -> Vec<GeoPoint> {
    let s = sites[i];
    order.clear();
    order.extend((0..sites.len()).filter(|&j| j != i));
    order.sort_by(|&a, &b| {
        s.planar_dist2(&sites[a])
            .total_cmp(&s.planar_dist2(&sites[b]))
            .then(a.cmp(&b))
    });
    let mut cell = frame.to_vec();
    let mut reach2 = cell.iter().map(|p| s.planar_dist2(p)).fold(0.0, f64::max);
    for &j in order.iter() {
        let t = sites[j];
        // A site farther than twice the cell radius cannot cut the cell.
        if s.planar_dist2(&t) > 4.0 * reach2 {
            break;
        }
        let mid = GeoPoint {
            lon: (s.lon + t.lon) / 2.0,
            lat: (s.lat + t.lat) / 2.0,
        };
        cell = clip_half_plane(&cell, mid, (t.lon - s.lon, t.lat - s.lat));
        if cell.len() < 3 {
            return Vec::new();
        }
        reach2 = cell.iter().map(|p| s.planar_dist2(p)).fold(0.0, f64::max);
    }
    cell
}

fn clip_to_convex(ring: &[GeoPoint], convex: &[GeoPoint]) -> Vec<GeoPoint> {
    let mut poly: Vec<GeoPoint> = ring[..ring.len() - 1].to_vec();
    for k in 0..convex.len() {
        let a = convex[k];
        let b = convex[(k + 1) % convex.len()];
        // Convex region is CCW, so its interior lies to the left of a->b.
        let normal = (b.lat - a.lat, -(b.lon - a.lon));
        poly = clip_half_plane(&poly, a, normal);
        if poly.len() < 3 {
            return Vec::new();
        }
    }
    poly
}

/// Builds cells without checking site placement. Sites outside the clip
/// polygon may receive empty cells or cells that do not contain them.
pub fn voronoi_unchecked(sites: &[GeoPoint], clip: &BoundaryPolygon) -> VoronoiDiagram {
    let (min, max) = clip.bbox();
    let (mut lo, mut hi) = (min, max);
    for s in sites {
        lo.lon = lo.lon.min(s.lon);
        lo.lat = lo.lat.min(s.lat);
        hi.lon = hi.lon.max(s.lon);
        hi.lat = hi.lat.max(s.lat);
    }
    let pad = ((hi.lon - lo.lon) + (hi.lat - lo.lat)).max(1e-9);
    let frame = [
        GeoPoint { lon: lo.lon - pad, lat: lo.lat - pad },
        GeoPoint { lon: hi.lon + pad, lat: lo.lat - pad },
        GeoPoint { lon: hi.lon + pad, lat: hi.lat + pad },
        GeoPoint { lon: lo.lon - pad, lat: hi.lat + pad },
    ];
    let mut order = Vec::with_capacity(sites.len());
    let cells = (0..sites.len())
        .map(|i| {
            let convex = convex_cell(sites, i, &mut order, &frame);
            let rings = if convex.len() < 3 {
                Vec::new()
            } else {
                clip.rings
                    .iter()
                    .map(|r| clip_to_convex(r, &convex))
                    .filter(|r| r.len() >= 3 && ring_signed_area(r).abs() > 0.0)
                    .map(close)
                    .collect()
            };
            VoronoiCell { rings }
        })
        .collect();
    VoronoiDiagram {
        sites: sites.to_vec(),
        cells,
    }
}

/// Voronoi tessellation of `clip` by `sites` under planar (lon, lat) distance.
pub fn voronoi(sites: &[GeoPoint], clip: &BoundaryPolygon) -> Result<VoronoiDiagram> {
    if sites.is_empty() {
        return Err(Error::validation("voronoi needs at least one site"));
    }
    let mut sorted: Vec<(f64, f64, usize)> = sites.iter().enumerate().map(|(i, p)| (p.lon, p.lat, i)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
            return Err(Error::validation(format!(
                "duplicate Voronoi sites {} and {} at ({}, {})",
                w[0].2, w[1].2, w[0].1, w[0].0
            )));
        }
    }
    if let Some((i, p)) = sites.iter().enumerate().find(|(_, p)| !clip.contains(p)) {
        return Err(Error::validation(format!(
            "site {i} at ({}, {}) lies outside clip polygon {:?}",
            p.lat, p.lon, clip.name
        )));
    }
    Ok(voronoi_unchecked(sites, clip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint { lat, lon }
    }

    fn square() -> BoundaryPolygon {
        BoundaryPolygon::rectangle("sq", pt(0.0, 0.0), pt(1.0, 1.0)).unwrap()
    }

    #[test]
    fn single_site_gets_whole_clip() {
        let d = voronoi(&[pt(0.3, 0.3)], &square()).unwrap();
        assert_eq!(d.cells.len(), 1);
        assert!((d.cells[0].area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_sites_split_by_bisector() {
        let d = voronoi(&[pt(0.25, 0.5), pt(0.75, 0.5)], &square()).unwrap();
        assert!((d.cells[0].area() - 0.5).abs() < 1e-12);
        assert!((d.cells[1].area() - 0.5).abs() < 1e-12);
        for p in d.cells[0].rings.iter().flatten() {
            assert!(p.lon <= 0.5 + 1e-12);
        }
        for p in d.cells[1].rings.iter().flatten() {
            assert!(p.lon >= 0.5 - 1e-12);
        }
    }

    #[test]
    fn duplicate_and_outside_sites_rejected() {
        assert!(voronoi(&[pt(0.2, 0.2), pt(0.2, 0.2)], &square()).is_err());
        assert!(voronoi(&[pt(0.2, 0.2), pt(1.5, 0.2)], &square()).is_err());
        assert!(voronoi(&[], &square()).is_err());
    }

    #[test]
    fn nearest_site_property_on_random_sites() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sites: Vec<GeoPoint> = (0..50).map(|_| pt(rng.gen(), rng.gen())).collect();
        let d = voronoi(&sites, &square()).unwrap();
        for _ in 0..1000 {
            let p = pt(rng.gen(), rng.gen());
            let nearest = (0..sites.len())
                .min_by(|&a, &b| p.planar_dist2(&sites[a]).total_cmp(&p.planar_dist2(&sites[b])))
                .unwrap();
            assert!(d.cells[nearest].contains(&p), "probe {p:?} not in cell of nearest site {nearest}");
        }
        let total: f64 = d.cells.iter().map(VoronoiCell::area).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_convex_clip_areas_add_up() {
        // L-shaped boundary.
        let ring = vec![
            pt(0.0, 0.0),
            pt(2.0, 0.0),
            pt(2.0, 1.0),
            pt(1.0, 1.0),
            pt(1.0, 2.0),
            pt(0.0, 2.0),
            pt(0.0, 0.0),
        ];
        let clip = BoundaryPolygon::new("L", vec![ring]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sites = Vec::new();
        while sites.len() < 30 {
            let p = pt(rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0);
            if clip.contains(&p) {
                sites.push(p);
            }
        }
        let d = voronoi(&sites, &clip).unwrap();
        let total: f64 = d.cells.iter().map(VoronoiCell::area).sum();
        assert!((total - 3.0).abs() / 3.0 < 1e-9, "total {total}");
        for (i, s) in sites.iter().enumerate() {
            assert!(d.cells[i].contains(s));
        }
    }
}
