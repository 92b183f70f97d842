use indexmap::IndexSet;

use crate::geom::Point3;

/// Dedup voxels per scene cell along each axis.
///
/// A hit point lies within `cell_size * sqrt(2) / 2` of its face center and
/// snapping to a voxel center moves it by at most `res * sqrt(3) / 2`; with
/// four subdivisions the sum stays below `cell_size`, so every observed face
/// is covered at `epsilon = cell_size`.
pub const DEDUP_SUBDIVISION: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey(pub [i32; 3]);

impl VoxelKey {
    pub fn of(p: Point3, resolution: f64) -> Self {
        let r = resolution;
        Self([(p.x / r).floor() as i32, (p.y / r).floor() as i32, (p.z / r).floor() as i32])
    }

    pub fn center(self, resolution: f64) -> Point3 {
        let r = resolution;
        Point3::new((self.0[0] as f64 + 0.5) * r, (self.0[1] as f64 + 0.5) * r, (self.0[2] as f64 + 0.5) * r)
    }
}

/// Accumulated reconstruction `P_t`: one representative per hash voxel,
/// stored as the voxel center, kept in insertion order.
///
/// The insertion order makes snapshots cheap: the cloud after step `i` is
/// the prefix of length `len_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfelCloud {
    resolution: f64,
    keys: IndexSet<VoxelKey>,
}

impl SurfelCloud {
    pub fn new(resolution: f64) -> Self {
        assert!(resolution > 0.0, "cloud resolution must be positive");
        Self { resolution, keys: IndexSet::new() }
    }

    pub fn for_cell_size(cell_size: f64) -> Self {
        Self::new(cell_size / DEDUP_SUBDIVISION as f64)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key_of(&self, p: Point3) -> VoxelKey {
        VoxelKey::of(p, self.resolution)
    }

    pub fn center_of(&self, k: VoxelKey) -> Point3 {
        k.center(self.resolution)
    }

    /// Inserts `p`; returns its key when the voxel was previously empty.
    pub fn insert(&mut self, p: Point3) -> Option<VoxelKey> {
        let k = self.key_of(p);
        self.keys.insert(k).then_some(k)
    }

    pub fn insert_key(&mut self, k: VoxelKey) -> bool {
        self.keys.insert(k)
    }

    /// Merges `points`, returning the keys that were new (the step delta).
    pub fn integrate(&mut self, points: &[Point3]) -> Vec<VoxelKey> {
        points.iter().filter_map(|&p| self.insert(p)).collect()
    }

    pub fn contains_key(&self, k: &VoxelKey) -> bool {
        self.keys.contains(k)
    }

    pub fn keys(&self) -> impl Iterator<Item = VoxelKey> + '_ {
        self.keys.iter().copied()
    }

    pub fn points(&self) -> impl Iterator<Item = Point3> + '_ {
        self.keys.iter().map(|&k| self.center_of(k))
    }

    pub fn to_points(&self) -> Vec<Point3> {
        self.points().collect()
    }

    /// Cloud made of the first `len` inserted voxels.
    pub fn prefix(&self, len: usize) -> SurfelCloud {
        Self { resolution: self.resolution, keys: self.keys.iter().take(len).copied().collect() }
    }

    /// `true` iff every voxel of `other` is present here.
    pub fn contains_cloud(&self, other: &SurfelCloud) -> bool {
        self.resolution == other.resolution && other.keys.iter().all(|k| self.keys.contains(k))
    }
}

/// Pure accumulation `P_t = P_{t-1} ∪ points`.
pub fn integrate(cloud: &SurfelCloud, points: &[Point3]) -> SurfelCloud {
    let mut out = cloud.clone();
    out.integrate(points);
    out
}
