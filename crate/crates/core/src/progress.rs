//! Agent-centered exploration embedding: vertical slice densities of the
//! reconstructed cloud plus a histogram of visited positions.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Cell, Grid, Point3};
use crate::sensor::{Pose, SurfelCloud};

/// Constant dividing raw per-pixel counts before they reach the learner.
pub const DENSITY_SCALE: f64 = 16.0;

/// Geometry of the square agent-centered window shared by the embedding,
/// the value map and the obstacle map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Side length in meters.
    pub extent: f64,
    pub grid_w: usize,
    pub grid_h: usize,
    /// Number of horizontal slices.
    pub slices: usize,
    pub y_min: f64,
    pub y_max: f64,
    /// Scene cell pitch used to locate pose centers.
    pub cell_size: f64,
}

impl WindowSpec {
    /// 16 m window of 32x32 pixels with four slices over `[0, wall_height]`.
    pub fn desk(cell_size: f64, wall_height: f64) -> Self {
        Self { extent: 16.0, grid_w: 32, grid_h: 32, slices: 4, y_min: 0.0, y_max: wall_height, cell_size }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0) || self.slices == 0 || self.grid_w == 0 || self.grid_h == 0 {
            return Err(Error::InvalidParams("window needs positive extent, grid and slices".into()));
        }
        if !self.grid_w.is_multiple_of(2) || !self.grid_h.is_multiple_of(2) {
            return Err(Error::InvalidParams("window grid dimensions must be even".into()));
        }
        if !(self.y_max > self.y_min) || !(self.cell_size > 0.0) {
            return Err(Error::InvalidParams("window needs y_max > y_min and positive cell size".into()));
        }
        Ok(())
    }

    /// Half-extent `r`.
    pub fn radius(&self) -> f64 {
        self.extent / 2.0
    }

    /// Pixel pitch `(x, z)` in meters.
    pub fn pixel_size(&self) -> (f64, f64) {
        (self.extent / self.grid_w as f64, self.extent / self.grid_h as f64)
    }

    pub fn slice_height(&self) -> f64 {
        (self.y_max - self.y_min) / self.slices as f64
    }

    pub fn pixels(&self) -> usize {
        self.grid_w * self.grid_h
    }

    /// Horizontal world position of a pose's cell center.
    pub fn center_xz(&self, pose: Pose) -> (f64, f64) {
        ((pose.cell.x as f64 + 0.5) * self.cell_size, (pose.cell.z as f64 + 0.5) * self.cell_size)
    }

    /// Projection `phi`: pixel of a horizontal point relative to the window
    /// centered at `(cx, cz)`. The closed upper bound maps to the last pixel.
    pub fn project(&self, cx: f64, cz: f64, x: f64, z: f64) -> (usize, usize) {
        let r = self.radius();
        let u = ((x - cx + r) * self.grid_w as f64 / (2.0 * r)).floor();
        let v = ((z - cz + r) * self.grid_h as f64 / (2.0 * r)).floor();
        ((u.max(0.0) as usize).min(self.grid_w - 1), (v.max(0.0) as usize).min(self.grid_h - 1))
    }

    /// Slice of a height, clamped so points on the floor or ceiling planes
    /// still land in exactly one slice.
    pub fn slice_of(&self, y: f64) -> usize {
        let j = ((y - self.y_min) / self.slice_height()).floor();
        (j.max(0.0) as usize).min(self.slices - 1)
    }

    /// Scene cell seen by pixel `(u, v)` of the window centered on `center`.
    /// Exact when the pixel pitch equals the cell size.
    pub fn cell_of_pixel(&self, center: Cell, u: usize, v: usize) -> Cell {
        center.offset(u as i32 - (self.grid_w / 2) as i32, v as i32 - (self.grid_h / 2) as i32)
    }

    /// Inverse of [`cell_of_pixel`](Self::cell_of_pixel); `None` outside.
    pub fn pixel_of_cell(&self, center: Cell, cell: Cell) -> Option<(usize, usize)> {
        let u = cell.x - center.x + (self.grid_w / 2) as i32;
        let v = cell.z - center.z + (self.grid_h / 2) as i32;
        (u >= 0 && v >= 0 && (u as usize) < self.grid_w && (v as usize) < self.grid_h)
            .then_some((u as usize, v as usize))
    }

    fn in_window(&self, cx: f64, cz: f64, x: f64, z: f64) -> bool {
        let r = self.radius();
        (x - cx).abs() <= r && (z - cz).abs() <= r
    }
}

/// Points of `points` inside the closed square window around `center`.
pub fn crop_points(points: impl IntoIterator<Item = Point3>, center: Pose, spec: &WindowSpec) -> Vec<Point3> {
    let (cx, cz) = spec.center_xz(center);
    points.into_iter().filter(|p| spec.in_window(cx, cz, p.x, p.z)).collect()
}

pub fn crop_filter(cloud: &SurfelCloud, center: Pose, spec: &WindowSpec) -> Vec<Point3> {
    crop_points(cloud.points(), center, spec)
}

/// Per-slice point counts on the window grid. Input points are expected to
/// be crop-filtered already; stray points are clamped to the border pixels.
pub fn slice_densities(points: &[Point3], center: Pose, spec: &WindowSpec) -> Vec<Grid<u16>> {
    let (cx, cz) = spec.center_xz(center);
    let mut out = vec![Grid::new(spec.grid_w, spec.grid_h, 0u16); spec.slices];
    for p in points {
        let (u, v) = spec.project(cx, cz, p.x, p.z);
        let img = &mut out[spec.slice_of(p.y)];
        let i = v * spec.grid_w + u;
        img.data_mut()[i] = img.data()[i].saturating_add(1);
    }
    out
}

/// Visit counts of the poses in `history` that fall inside the window.
/// By convention the history includes the current pose.
pub fn trajectory_histogram(history: &[Pose], center: Pose, spec: &WindowSpec) -> Grid<u16> {
    let (cx, cz) = spec.center_xz(center);
    let mut out = Grid::new(spec.grid_w, spec.grid_h, 0u16);
    for pose in history {
        let (x, z) = spec.center_xz(*pose);
        if spec.in_window(cx, cz, x, z) {
            let (u, v) = spec.project(cx, cz, x, z);
            let i = v * spec.grid_w + u;
            out.data_mut()[i] = out.data()[i].saturating_add(1);
        }
    }
    out
}

/// The predictor input: `K` density images and the trajectory histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationEmbedding {
    pub slices: Vec<Grid<u16>>,
    pub trajectory: Grid<u16>,
    pub center: Pose,
}

impl ExplorationEmbedding {
    pub fn zeros(spec: &WindowSpec, center: Pose) -> Self {
        Self {
            slices: vec![Grid::new(spec.grid_w, spec.grid_h, 0); spec.slices],
            trajectory: Grid::new(spec.grid_w, spec.grid_h, 0),
            center,
        }
    }

    pub fn channels(&self) -> usize {
        self.slices.len() + 1
    }

    pub fn width(&self) -> usize {
        self.trajectory.width()
    }

    pub fn height(&self) -> usize {
        self.trajectory.height()
    }

    /// Channel-major `(K + 1) x H x W` tensor scaled by [`DENSITY_SCALE`].
    pub fn to_input(&self) -> Vec<f64> {
        self.slices
            .iter()
            .chain(std::iter::once(&self.trajectory))
            .flat_map(|g| g.data().iter().map(|&c| c as f64 / DENSITY_SCALE))
            .collect()
    }

    /// Writes one binary PGM per channel (`slice0.pgm`, ..., `trajectory.pgm`)
    /// with counts saturated at 255.
    pub fn dump_pgm(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let write = |name: String, g: &Grid<u16>| -> Result<()> {
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
            write!(f, "P5\n{} {}\n255\n", g.width(), g.height())?;
            let bytes: Vec<u8> = g.data().iter().map(|&c| c.min(255) as u8).collect();
            f.write_all(&bytes)?;
            Ok(())
        };
        for (j, s) in self.slices.iter().enumerate() {
            write(format!("slice{j}.pgm"), s)?;
        }
        write("trajectory.pgm".into(), &self.trajectory)
    }
}

/// Builds `E` from the first `cloud_len` points of `cloud` (all of them when
/// `None`) and the pose history.
pub fn build_embedding_prefix(
    cloud: &SurfelCloud,
    cloud_len: Option<usize>,
    history: &[Pose],
    center: Pose,
    spec: &WindowSpec,
) -> ExplorationEmbedding {
    let n = cloud_len.unwrap_or(cloud.len());
    let pts = crop_points(cloud.points().take(n), center, spec);
    ExplorationEmbedding {
        slices: slice_densities(&pts, center, spec),
        trajectory: trajectory_histogram(history, center, spec),
        center,
    }
}

pub fn build_embedding(cloud: &SurfelCloud, history: &[Pose], center: Pose, spec: &WindowSpec) -> ExplorationEmbedding {
    build_embedding_prefix(cloud, None, history, center, spec)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn spec() -> WindowSpec {
        WindowSpec::desk(0.5, 3.0)
    }

    fn center() -> Pose {
        Pose::new(Cell::new(20, 20), 0)
    }

    #[test]
    fn empty_cloud_crops_to_nothing() {
        let cloud = SurfelCloud::for_cell_size(0.5);
        assert!(crop_filter(&cloud, center(), &spec()).is_empty());
    }

    #[test]
    fn closed_bound_is_included() {
        let (cx, cz) = spec().center_xz(center());
        let pts =
            vec![Point3::new(cx + 8.0, 1.0, cz), Point3::new(cx, 1.0, cz - 8.0), Point3::new(cx + 8.0 + 1e-9, 1.0, cz)];
        let kept = crop_points(pts.clone(), center(), &spec());
        assert_eq!(kept, pts[..2].to_vec());
        let imgs = slice_densities(&kept, center(), &spec());
        assert_eq!(imgs[1].get(Cell::new(31, 16)), Some(&1));
        assert_eq!(imgs[1].get(Cell::new(16, 0)), Some(&1));
    }

    #[test]
    fn crop_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (cx, cz) = spec().center_xz(center());
        let pts: Vec<Point3> = (0..1000)
            .map(|_| {
                Point3::new(
                    cx + rng.random_range(-12.0..12.0),
                    rng.random_range(0.0..3.0),
                    cz + rng.random_range(-12.0..12.0),
                )
            })
            .collect();
        let kept = crop_points(pts.clone(), center(), &spec());
        let oracle: Vec<Point3> =
            pts.into_iter().filter(|p| (p.x - cx).abs() <= 8.0 && (p.z - cz).abs() <= 8.0).collect();
        assert_eq!(kept, oracle);
    }

    #[test]
    fn point_at_agent_lands_in_center_pixel() {
        let (cx, cz) = spec().center_xz(center());
        let imgs = slice_densities(&[Point3::new(cx, 1.6, cz)], center(), &spec());
        for (j, img) in imgs.iter().enumerate() {
            let expected = if j == 2 { 1 } else { 0 };
            assert_eq!(img.data().iter().map(|&c| c as usize).sum::<usize>(), expected);
        }
        assert_eq!(imgs[2].get(Cell::new(16, 16)), Some(&1));
    }

    #[test]
    fn densities_match_brute_binning() {
        let s = spec();
        let (cx, cz) = s.center_xz(center());
        let mut pts = Vec::new();
        for i in 0..40 {
            for k in 0..40 {
                for y in [0.0, 0.7, 1.2, 2.9, 3.0] {
                    pts.push(Point3::new(cx - 8.0 + i as f64 * 0.4, y, cz - 8.0 + k as f64 * 0.4));
                }
            }
        }
        let imgs = slice_densities(&pts, center(), &s);
        let mut oracle = vec![vec![0u16; 32 * 32]; 4];
        for p in &pts {
            let u = (((p.x - cx + 8.0) * 2.0).floor() as usize).min(31);
            let v = (((p.z - cz + 8.0) * 2.0).floor() as usize).min(31);
            let j = ((p.y / 0.75).floor() as usize).min(3);
            oracle[j][v * 32 + u] += 1;
        }
        for j in 0..4 {
            assert_eq!(imgs[j].data(), &oracle[j][..]);
        }
    }

    #[test]
    fn cell_centers_map_to_their_pixels() {
        let s = spec();
        let c = center();
        let (cx, cz) = s.center_xz(c);
        for du in -16..16 {
            for dv in -16..16 {
                let cell = c.cell.offset(du, dv);
                let p = s.center_xz(Pose::new(cell, 0));
                let (u, v) = s.project(cx, cz, p.0, p.1);
                assert_eq!(s.cell_of_pixel(c.cell, u, v), cell);
                assert_eq!(s.pixel_of_cell(c.cell, cell), Some((u, v)));
            }
        }
        assert_eq!(s.pixel_of_cell(c.cell, c.cell.offset(16, 0)), None);
    }

    #[test]
    fn histogram_counts_revisits() {
        let s = spec();
        assert_eq!(trajectory_histogram(&[], center(), &s).data().iter().map(|&c| c as u32).sum::<u32>(), 0);
        let p = Pose::new(Cell::new(22, 19), 3);
        let h = trajectory_histogram(&[p, p, p, center()], center(), &s);
        assert_eq!(h.get(Cell::new(18, 15)), Some(&3));
        assert_eq!(h.get(Cell::new(16, 16)), Some(&1));
    }

    #[test]
    fn random_walk_histogram_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = spec();
        let mut cell = center().cell;
        let mut hist = Vec::new();
        for _ in 0..500 {
            cell = cell.neighbors4()[rng.random_range(0..4)];
            hist.push(Pose::new(cell, 0));
        }
        let (cx, cz) = s.center_xz(center());
        let inside = hist
            .iter()
            .filter(|p| {
                let (x, z) = s.center_xz(**p);
                (x - cx).abs() <= 8.0 && (z - cz).abs() <= 8.0
            })
            .count();
        let h = trajectory_histogram(&hist, center(), &s);
        assert_eq!(h.data().iter().map(|&c| c as usize).sum::<usize>(), inside);
    }

    #[test]
    fn zero_state_embedding_is_zero() {
        let cloud = SurfelCloud::for_cell_size(0.5);
        let e = build_embedding(&cloud, &[], center(), &spec());
        assert_eq!(e, ExplorationEmbedding::zeros(&spec(), center()));
        assert!(e.to_input().iter().all(|&x| x == 0.0));
        assert_eq!(e.to_input().len(), 5 * 32 * 32);
    }

    #[test]
    fn pgm_dump_writes_every_channel() {
        let dir = tempfile::tempdir().unwrap();
        let e = ExplorationEmbedding::zeros(&spec(), center());
        e.dump_pgm(dir.path()).unwrap();
        let bytes = std::fs::read(dir.path().join("trajectory.pgm")).unwrap();
        assert!(bytes.starts_with(b"P5\n32 32\n255\n"));
        assert_eq!(bytes.len(), 13 + 32 * 32);
        assert!(dir.path().join("slice3.pgm").exists());
    }

    proptest! {
        #[test]
        fn shifting_world_and_agent_by_cells_is_invariant(
            raw in prop::collection::vec((-10.0..10.0f64, 0.0..3.0f64, -10.0..10.0f64), 0..300),
            dx in -20i32..20, dz in -20i32..20,
        ) {
            let s = spec();
            let c0 = center();
            let c1 = Pose::new(c0.cell.offset(dx, dz), 0);
            let (x0, z0) = s.center_xz(c0);
            let mut a = SurfelCloud::for_cell_size(0.5);
            let mut b = SurfelCloud::for_cell_size(0.5);
            for (x, y, z) in raw {
                a.insert(Point3::new(x0 + x, y, z0 + z));
                b.insert(Point3::new(x0 + x + dx as f64 * 0.5, y, z0 + z + dz as f64 * 0.5));
            }
            let ha = [c0, Pose::new(c0.cell.offset(1, 0), 0)];
            let hb = [c1, Pose::new(c1.cell.offset(1, 0), 0)];
            let ea = build_embedding(&a, &ha, c0, &s);
            let eb = build_embedding(&b, &hb, c1, &s);
            prop_assert_eq!(ea.slices, eb.slices);
            prop_assert_eq!(ea.trajectory, eb.trajectory);
        }

        #[test]
        fn mass_is_conserved_across_slices(
            raw in prop::collection::vec((-9.0..9.0f64, -0.5..3.5f64, -9.0..9.0f64), 0..300),
        ) {
            let s = spec();
            let (cx, cz) = s.center_xz(center());
            let pts: Vec<Point3> = raw.into_iter().map(|(x, y, z)| Point3::new(cx + x, y, cz + z)).collect();
            let kept = crop_points(pts, center(), &s);
            let imgs = slice_densities(&kept, center(), &s);
            let total: usize = imgs.iter().flat_map(|g| g.data()).map(|&c| c as usize).sum();
            prop_assert_eq!(total, kept.len());
        }
    }
}
