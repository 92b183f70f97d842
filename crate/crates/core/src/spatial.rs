//! Uniform-grid spatial index over a fixed point set.
//!
//! Points are bucketed at a chosen resolution. Small bounding boxes use a
//! dense CSR layout; very sparse sets fall back to a hash map of buckets.

use std::collections::HashMap;

use crate::geom::Point3;

const DENSE_CELL_LIMIT: usize = 1 << 22;

#[derive(Clone, Debug)]
enum Buckets {
    Dense { dims: [usize; 3], offsets: Vec<u32>, ids: Vec<u32> },
    Sparse(HashMap<[i64; 3], Vec<u32>>),
}

#[derive(Clone, Debug)]
pub struct SpatialIndex {
    res: f64,
    origin: [i64; 3],
    points: Vec<Point3>,
    buckets: Buckets,
}

fn bucket_of(p: Point3, res: f64) -> [i64; 3] {
    [(p.x / res).floor() as i64, (p.y / res).floor() as i64, (p.z / res).floor() as i64]
}

impl SpatialIndex {
    pub fn new(points: Vec<Point3>, res: f64) -> Self {
        assert!(res > 0.0 && res.is_finite(), "spatial index resolution must be positive");
        if points.is_empty() {
            return Self {
                res,
                origin: [0; 3],
                points,
                buckets: Buckets::Dense { dims: [0; 3], offsets: vec![0], ids: Vec::new() },
            };
        }
        let keys: Vec<[i64; 3]> = points.iter().map(|&p| bucket_of(p, res)).collect();
        let mut lo = keys[0];
        let mut hi = keys[0];
        for k in &keys {
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
        }
        let dims = [(hi[0] - lo[0] + 1) as usize, (hi[1] - lo[1] + 1) as usize, (hi[2] - lo[2] + 1) as usize];
        let total = dims[0].saturating_mul(dims[1]).saturating_mul(dims[2]);
        let buckets = if total <= DENSE_CELL_LIMIT {
            let flat = |k: &[i64; 3]| {
                ((k[2] - lo[2]) as usize * dims[1] + (k[1] - lo[1]) as usize) * dims[0] + (k[0] - lo[0]) as usize
            };
            let mut counts = vec![0u32; total + 1];
            for k in &keys {
                counts[flat(k) + 1] += 1;
            }
            for i in 0..total {
                counts[i + 1] += counts[i];
            }
            let offsets = counts.clone();
            let mut cursor = counts;
            let mut ids = vec![0u32; points.len()];
            for (i, k) in keys.iter().enumerate() {
                let b = flat(k);
                ids[cursor[b] as usize] = i as u32;
                cursor[b] += 1;
            }
            Buckets::Dense { dims, offsets, ids }
        } else {
            let mut map: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
            for (i, k) in keys.iter().enumerate() {
                map.entry(*k).or_default().push(i as u32);
            }
            Buckets::Sparse(map)
        };
        Self { res, origin: lo, points, buckets }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        self.res
    }

    fn bucket(&self, k: [i64; 3]) -> &[u32] {
        match &self.buckets {
            Buckets::Dense { dims, offsets, ids } => {
                let rel = [k[0] - self.origin[0], k[1] - self.origin[1], k[2] - self.origin[2]];
                if rel.iter().zip(dims.iter()).any(|(&r, &d)| r < 0 || r as usize >= d) {
                    return &[];
                }
                let b = (rel[2] as usize * dims[1] + rel[1] as usize) * dims[0] + rel[0] as usize;
                &ids[offsets[b] as usize..offsets[b + 1] as usize]
            }
            Buckets::Sparse(map) => map.get(&k).map(Vec::as_slice).unwrap_or(&[]),
        }
    }

    /// Visits every indexed point whose distance to `q` is strictly below `radius`.
    pub fn for_each_within(&self, q: Point3, radius: f64, mut f: impl FnMut(u32, f64)) {
        let r2 = radius * radius;
        let span = (radius / self.res).ceil() as i64;
        let c = bucket_of(q, self.res);
        for dz in -span..=span {
            for dy in -span..=span {
                for dx in -span..=span {
                    for &id in self.bucket([c[0] + dx, c[1] + dy, c[2] + dz]) {
                        let d2 = self.points[id as usize].dist2(q);
                        if d2 < r2 {
                            f(id, d2);
                        }
                    }
                }
            }
        }
    }

    /// `true` iff some indexed point lies strictly closer than `radius` to `q`.
    pub fn any_within(&self, q: Point3, radius: f64) -> bool {
        let r2 = radius * radius;
        let span = (radius / self.res).ceil() as i64;
        let c = bucket_of(q, self.res);
        for dz in -span..=span {
            for dy in -span..=span {
                for dx in -span..=span {
                    for &id in self.bucket([c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if self.points[id as usize].dist2(q) < r2 {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Nearest indexed point to `q` at distance at most `max_dist`.
    ///
    /// Searches growing shells of buckets; shell `k` cannot contain points
    /// closer than `(k - 1) * res`, which bounds the search exactly.
    pub fn nearest(&self, q: Point3, max_dist: f64) -> Option<(u32, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let c = bucket_of(q, self.res);
        let max_shell = (max_dist / self.res).ceil() as i64 + 1;
        let mut best: Option<(u32, f64)> = None;
        for k in 0..=max_shell {
            if let Some((_, d)) = best {
                if d <= (k - 1) as f64 * self.res {
                    break;
                }
            }
            for dz in -k..=k {
                for dy in -k..=k {
                    for dx in -k..=k {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != k {
                            continue;
                        }
                        for &id in self.bucket([c[0] + dx, c[1] + dy, c[2] + dz]) {
                            let d = self.points[id as usize].dist(q);
                            let better = match best {
                                None => true,
                                Some((bid, bd)) => d < bd || (d == bd && id < bid),
                            };
                            if better && d <= max_dist {
                                best = Some((id, d));
                            }
                        }
                    }
                }
            }
        }
        best
    }
}
