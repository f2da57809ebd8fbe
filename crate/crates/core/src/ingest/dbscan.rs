//! DBSCAN over planar points with a uniform grid for neighbor lookup.

use std::collections::HashMap;

/// Cluster label per point; `None` marks noise (only possible when
/// `min_points > 1`). Labels are assigned in input order.
pub fn dbscan(points: &[(f64, f64)], eps: f64, min_points: usize) -> Vec<Option<usize>> {
    assert!(eps > 0.0, "eps must be positive");
    let min_points = min_points.max(1);
    let cell = |p: &(f64, f64)| ((p.0 / eps).floor() as i64, (p.1 / eps).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let eps2 = eps * eps;
    let neighbors = |i: usize, out: &mut Vec<usize>| {
        out.clear();
        let p = points[i];
        let (cx, cy) = cell(&p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = grid.get(&(cx + dx, cy + dy)) {
                    for &j in bucket {
                        let q = points[j];
                        let d2 = (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
                        if d2 <= eps2 {
                            out.push(j);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    };

    const UNSEEN: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let mut label = vec![UNSEEN; points.len()];
    let mut next = 0usize;
    let mut nbrs = Vec::new();
    let mut inner = Vec::new();
    for i in 0..points.len() {
        if label[i] != UNSEEN {
            continue;
        }
        neighbors(i, &mut nbrs);
        if nbrs.len() < min_points {
            label[i] = NOISE;
            continue;
        }
        let c = next;
        next += 1;
        label[i] = c;
        let mut queue: Vec<usize> = nbrs.clone();
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            if label[j] == NOISE {
                label[j] = c;
            }
            if label[j] != UNSEEN {
                continue;
            }
            label[j] = c;
            neighbors(j, &mut inner);
            if inner.len() >= min_points {
                queue.extend(inner.iter().copied().filter(|&k| label[k] == UNSEEN || label[k] == NOISE));
            }
        }
    }
    label
        .into_iter()
        .map(|l| if l == NOISE { None } else { Some(l) })
        .collect()
}
