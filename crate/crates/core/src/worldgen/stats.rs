use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scene;
use crate::error::{Error, Result};
use crate::geom::{bfs_distances, Cell, Grid, Point3, UNREACHED};
use crate::progress::WindowSpec;
use crate::sensor::Pose;

/// Ground-truth surfels: the center of every face between a free voxel and
/// a solid voxel, the floor, or the ceiling. Window-band voxels are free.
///
/// Ordering is deterministic: voxels in (z, layer, x) scan order, faces in
/// the order -x, +x, -y, +y, -z, +z.
pub fn gt_surface_points(scene: &Scene) -> Vec<Point3> {
    let cs = scene.cell_size();
    let (w, h, l) = (scene.width() as i32, scene.height() as i32, scene.layers() as i32);
    let mut out = Vec::new();
    for z in 0..h {
        for y in 0..l {
            for x in 0..w {
                if scene.is_solid_voxel(x, y, z) {
                    continue;
                }
                let (cx, cy, cz) = ((x as f64 + 0.5) * cs, (y as f64 + 0.5) * cs, (z as f64 + 0.5) * cs);
                let half = 0.5 * cs;
                let faces = [
                    ((x - 1, y, z), Point3::new(cx - half, cy, cz)),
                    ((x + 1, y, z), Point3::new(cx + half, cy, cz)),
                    ((x, y - 1, z), Point3::new(cx, cy - half, cz)),
                    ((x, y + 1, z), Point3::new(cx, cy + half, cz)),
                    ((x, y, z - 1), Point3::new(cx, cy, cz - half)),
                    ((x, y, z + 1), Point3::new(cx, cy, cz + half)),
                ];
                for ((nx, ny, nz), p) in faces {
                    if scene.is_solid_voxel(nx, ny, nz) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Maximum ratio of 4-connected geodesic distance to euclidean distance over
/// sampled pairs of navigable cells.
///
/// Each unordered pair is kept with probability `sample_fraction` (all pairs
/// when it is 1), so for fractions below 1 the result is a lower bound on the
/// exact all-pairs statistic.
pub fn nav_complexity(scene: &Scene, sample_fraction: f64, seed: u64) -> Result<f64> {
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::InvalidParams("sample_fraction must lie in (0, 1]".into()));
    }
    let cells = scene.navigable_cells();
    let n = cells.len();
    if n < 2 {
        return Err(Error::TooFewCells(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut partners: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut any = false;
    for (i, row) in partners.iter_mut().enumerate() {
        for j in i + 1..n {
            if sample_fraction >= 1.0 || rng.random::<f64>() < sample_fraction {
                row.push(j);
                any = true;
            }
        }
    }
    if !any {
        let i = rng.random_range(0..n - 1);
        let j = rng.random_range(i + 1..n);
        partners[i].push(j);
    }
    let mut best: f64 = 0.0;
    for (i, js) in partners.iter().enumerate() {
        if js.is_empty() {
            continue;
        }
        let dist = bfs_distances(scene.navgrid(), cells[i]);
        for &j in js {
            let d = *dist.get(cells[j]).expect("navigable cell in grid");
            debug_assert_ne!(d, UNREACHED, "navgrid is connected");
            let (dx, dz) = ((cells[i].x - cells[j].x) as f64, (cells[i].z - cells[j].z) as f64);
            best = best.max(d as f64 / (dx * dx + dz * dz).sqrt());
        }
    }
    Ok(best)
}

/// Binary obstacle grid (`true` = obstacle) of the scene cut by the plane at
/// the agent's height, rasterized on the window centered on `center`.
///
/// Each window pixel samples the scene at the pixel's lower corner, which is
/// where the window projection places cell centers; with a window pitch equal
/// to `cell_size` pixel `(u, v)` therefore reads exactly scene cell
/// `center + (u - W/2, v - H/2)`. Samples outside the scene are obstacles.
pub fn obstacle_slice(scene: &Scene, center: Pose, window: &WindowSpec) -> Grid<bool> {
    let cs = scene.cell_size();
    let (cx, cz) = scene.cell_center(center.cell);
    let r = window.radius();
    let (pw, ph) = window.pixel_size();
    let mut out = Grid::new(window.grid_w, window.grid_h, true);
    for v in 0..window.grid_h {
        for u in 0..window.grid_w {
            let x = cx - r + u as f64 * pw;
            let z = cz - r + v as f64 * ph;
            let cell = Cell::new((x / cs).floor() as i32, (z / cs).floor() as i32);
            out.set(Cell::new(u as i32, v as i32), scene.blocked_at_agent_plane(cell));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::{generate_scene, DifficultyParams, WindowBand};

    fn room(w: usize, h: usize, layers: usize) -> Scene {
        let mut plan = String::new();
        plan.push_str(&"#".repeat(w + 2));
        plan.push('\n');
        for _ in 0..h {
            plan.push('#');
            plan.push_str(&".".repeat(w));
            plan.push_str("#\n");
        }
        plan.push_str(&"#".repeat(w + 2));
        Scene::from_ascii(&plan, 0.5, 0.5 * layers as f64, 0.25, None).unwrap()
    }

    /// Brute-force adjacency count used as the oracle for surfel totals.
    fn adjacency_oracle(scene: &Scene) -> usize {
        let (w, h, l) = (scene.width() as i32, scene.height() as i32, scene.layers() as i32);
        let mut n = 0;
        for z in -1..=h {
            for y in -1..=l {
                for x in -1..=w {
                    if scene.is_solid_voxel(x, y, z) {
                        continue;
                    }
                    for (dx, dy, dz) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                        if scene.is_solid_voxel(x + dx, y + dy, z + dz) {
                            n += 1;
                        }
                    }
                }
            }
        }
        n
    }

    #[test]
    fn unit_cell_has_six_surfels() {
        let s = room(1, 1, 1);
        let pts = gt_surface_points(&s);
        assert_eq!(pts.len(), 6);
        let c = Point3::new(0.75, 0.25, 0.75);
        for p in pts {
            assert!((p.dist(c) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn four_by_four_room_count() {
        let s = room(4, 4, 2);
        let n = gt_surface_points(&s).len();
        assert_eq!(n, 4 * 4 * 2 + 16 * 2);
        assert_eq!(n, adjacency_oracle(&s));
    }

    #[test]
    fn window_band_swaps_wall_faces_for_sill_faces() {
        let base = "#####\n#...#\n##.##\n#...#\n#####";
        let with_window = "#####\n#...#\n#w.##\n#...#\n#####";
        let band = WindowBand { lo: 0.5, hi: 1.0 };
        let s0 = Scene::from_ascii(base, 0.5, 2.0, 1.25, None).unwrap();
        let s1 = Scene::from_ascii(with_window, 0.5, 2.0, 1.25, Some(band)).unwrap();
        let n0 = gt_surface_points(&s0).len();
        let n1 = gt_surface_points(&s1).len();
        assert_eq!(n0, adjacency_oracle(&s0));
        assert_eq!(n1, adjacency_oracle(&s1));
        // layer 1 of wall cell (1,2) opens: the three neighbour faces pointing
        // into it vanish; the open voxel adds a sill, a lintel and a face
        // against the boundary wall behind it.
        let pts = gt_surface_points(&s1);
        let sill = Point3::new(0.75, 0.5, 1.25);
        let lintel = Point3::new(0.75, 1.0, 1.25);
        assert!(pts.iter().any(|p| p.dist(sill) < 1e-12));
        assert!(pts.iter().any(|p| p.dist(lintel) < 1e-12));
        let removed = Point3::new(1.0, 0.75, 1.25);
        assert!(!pts.iter().any(|p| p.dist(removed) < 1e-12));
        assert_eq!(n1, n0);
    }

    #[test]
    fn nav_complexity_open_room_bounded_by_sqrt2() {
        let s = room(5, 4, 2);
        let r = nav_complexity(&s, 1.0, 0).unwrap();
        // exact oracle: max manhattan / euclidean over all pairs
        let cells = s.navigable_cells();
        let mut oracle: f64 = 0.0;
        for (i, a) in cells.iter().enumerate() {
            for b in &cells[i + 1..] {
                let (dx, dz) = ((a.x - b.x) as f64, (a.z - b.z) as f64);
                oracle = oracle.max((dx.abs() + dz.abs()) / (dx * dx + dz * dz).sqrt());
            }
        }
        assert_eq!(r, oracle);
        assert!(r <= 2f64.sqrt() + 1e-9);
    }

    #[test]
    fn nav_complexity_straight_corridor_is_one() {
        let s = Scene::from_ascii("####\n#..#\n####", 0.5, 1.0, 0.75, None).unwrap();
        assert_eq!(nav_complexity(&s, 1.0, 0).unwrap(), 1.0);
        let tiny = Scene::from_ascii("###\n#.#\n###", 0.5, 1.0, 0.75, None).unwrap();
        assert!(matches!(nav_complexity(&tiny, 1.0, 0), Err(Error::TooFewCells(1))));
    }

    #[test]
    fn nav_complexity_u_corridor_matches_bfs() {
        let plan = "#####\n#...#\n#.#.#\n#.#.#\n#####";
        let s = Scene::from_ascii(plan, 0.5, 1.0, 0.75, None).unwrap();
        // ends (1,3) and (3,3): geodesic 6, euclidean 2
        let r = nav_complexity(&s, 1.0, 0).unwrap();
        assert_eq!(r, 3.0);
    }

    #[test]
    fn sampled_complexity_is_lower_bound() {
        let s = generate_scene(&DifficultyParams::preset("simple").unwrap().with_seed(3)).unwrap();
        let full = nav_complexity(&s, 1.0, 0).unwrap();
        for seed in 0..3 {
            assert!(nav_complexity(&s, 0.05, seed).unwrap() <= full);
        }
    }

    fn window() -> WindowSpec {
        WindowSpec { extent: 4.0, grid_w: 8, grid_h: 8, slices: 4, y_min: 0.0, y_max: 3.0, cell_size: 0.5 }
    }

    #[test]
    fn slice_open_field_is_free() {
        let s = room(12, 12, 6);
        let center = Pose::new(Cell::new(6, 6), 0);
        let g = obstacle_slice(&s, center, &window());
        assert_eq!(g.count(), 0);
    }

    #[test]
    fn slice_border_is_obstacle() {
        let s = room(12, 12, 6);
        let center = Pose::new(Cell::new(2, 2), 0);
        let g = obstacle_slice(&s, center, &window());
        // window covers cells -2..=5; cells -2, -1 are outside, 0 is a wall
        for v in 0..8 {
            for u in 0..8 {
                let cell = Cell::new(2 + u - 4, 2 + v - 4);
                let expected = cell.x <= 0 || cell.z <= 0;
                assert_eq!(g.is_set(Cell::new(u, v)), expected, "pixel ({u},{v})");
            }
        }
    }

    #[test]
    fn window_band_over_agent_height_is_free_in_slice() {
        let band = WindowBand { lo: 1.0, hi: 2.2 };
        let plan = "######\n#....#\n#.w..#\n#....#\n######";
        let s = Scene::from_ascii(plan, 0.5, 3.0, 1.65, Some(band)).unwrap();
        let center = Pose::new(Cell::new(3, 2), 0);
        let g = obstacle_slice(&s, center, &window());
        // cell (2,2) sits at pixel (3,4)
        assert!(!g.is_set(Cell::new(3, 4)));
        assert_eq!(g.is_set(Cell::new(3, 4)), s.blocked_at_agent_plane(Cell::new(2, 2)));
        // an ordinary wall in the same slice stays blocked
        assert!(g.is_set(Cell::new(1, 4)));
    }
}
