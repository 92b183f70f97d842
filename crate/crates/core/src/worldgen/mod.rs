//! Procedural 2.5D indoor scenes: an extruded wall plan with window bands,
//! a navigation grid, and exact ground-truth surface samples.

mod generate;
mod io;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{flood_fill_count, Cell, Grid};

pub use generate::{generate_scene, generate_scene_retrying};
pub use stats::{gt_surface_points, nav_complexity, obstacle_slice};

pub const DEFAULT_CELL_SIZE: f64 = 0.5;
pub const DEFAULT_WALL_HEIGHT: f64 = 3.0;
pub const DEFAULT_AGENT_HEIGHT: f64 = 1.65;

/// Knobs controlling how hard a generated scene is to explore.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyParams {
    pub room_count_range: (u32, u32),
    /// Room side lengths in meters.
    pub room_size_range: (f64, f64),
    pub corridor_width: f64,
    pub door_width: f64,
    /// Fraction of eligible thin walls that carry a window band.
    pub window_fraction: f64,
    /// Mean number of extra links per room on top of the spanning tree.
    pub branching_factor: f64,
    pub seed: u64,
    pub cell_size: f64,
    pub wall_height: f64,
    pub agent_height: f64,
}

impl DifficultyParams {
    /// Built-in desk-scale presets: `simple`, `normal`, `hard`, `insane`.
    pub fn preset(name: &str) -> Result<Self> {
        let base = |rooms: (u32, u32), size: (f64, f64), corridor, door, windows, branching| Self {
            room_count_range: rooms,
            room_size_range: size,
            corridor_width: corridor,
            door_width: door,
            window_fraction: windows,
            branching_factor: branching,
            seed: 0,
            cell_size: DEFAULT_CELL_SIZE,
            wall_height: DEFAULT_WALL_HEIGHT,
            agent_height: DEFAULT_AGENT_HEIGHT,
        };
        match name {
            "simple" => Ok(base((2, 3), (3.0, 5.0), 1.0, 1.0, 0.2, 0.0)),
            "normal" => Ok(base((4, 6), (3.0, 5.0), 1.0, 0.5, 0.3, 0.5)),
            "hard" => Ok(base((7, 9), (2.5, 5.0), 1.0, 0.5, 0.3, 1.0)),
            "insane" => Ok(base((10, 13), (2.5, 5.0), 0.5, 0.5, 0.4, 1.5)),
            other => Err(Error::Config(format!("unknown difficulty preset '{other}'"))),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cs = self.cell_size;
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(cs > 0.0) {
            return bad("cell_size must be positive");
        }
        let (rmin, rmax) = self.room_count_range;
        if rmin == 0 || rmin > rmax {
            return bad("room_count_range must satisfy 1 <= min <= max");
        }
        let (smin, smax) = self.room_size_range;
        if smin < 2.0 * cs || smin > smax {
            return bad("room_size_range must satisfy 2*cell_size <= min <= max");
        }
        if self.corridor_width < cs {
            return bad("corridor_width must be at least cell_size");
        }
        if self.door_width < cs {
            return bad("door_width must be at least cell_size");
        }
        if !(0.0..=1.0).contains(&self.window_fraction) {
            return bad("window_fraction must lie in [0, 1]");
        }
        if !(self.branching_factor >= 0.0) {
            return bad("branching_factor must be non-negative");
        }
        if !(self.agent_height > 0.0 && self.agent_height < self.wall_height) {
            return bad("agent_height must lie strictly inside (0, wall_height)");
        }
        Ok(())
    }
}

/// Open vertical interval `[lo, hi)` (meters) cut into a wall column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowBand {
    pub lo: f64,
    pub hi: f64,
}

impl WindowBand {
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y < self.hi
    }
}

/// Immutable 2.5D scene.
///
/// A wall column is solid over `[0, wall_height]` except inside its window
/// band. Vertically the scene is voxelized in `cell_size` layers; a wall
/// voxel is open when its window band contains the layer's mid-height. At the
/// agent plane a wall cell is free iff its band contains `agent_height`.
/// Window cells are never navigable.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    cell_size: f64,
    wall_height: f64,
    agent_height: f64,
    walls: Grid<bool>,
    windows: BTreeMap<Cell, WindowBand>,
    navgrid: Grid<bool>,
    layers: usize,
}

impl Scene {
    pub fn new(
        cell_size: f64,
        wall_height: f64,
        agent_height: f64,
        walls: Grid<bool>,
        windows: BTreeMap<Cell, WindowBand>,
        navgrid: Grid<bool>,
    ) -> Result<Self> {
        let invalid = |m: String| Err(Error::InvalidScene(m));
        if !(cell_size > 0.0) {
            return invalid("cell_size must be positive".into());
        }
        let layers_f = wall_height / cell_size;
        let layers = layers_f.round() as usize;
        if layers == 0 || (layers_f - layers as f64).abs() > 1e-9 {
            return invalid(format!("wall_height {wall_height} is not a multiple of cell_size"));
        }
        if !(agent_height > 0.0 && agent_height < wall_height) {
            return invalid("agent_height must lie inside (0, wall_height)".into());
        }
        if walls.width() != navgrid.width() || walls.height() != navgrid.height() {
            return invalid("wall grid and navgrid dimensions differ".into());
        }
        let (w, h) = (walls.width() as i32, walls.height() as i32);
        if w < 3 || h < 3 {
            return invalid("scene must be at least 3x3 cells".into());
        }
        for c in walls.cells() {
            let boundary = c.x == 0 || c.z == 0 || c.x == w - 1 || c.z == h - 1;
            if boundary && !walls.is_set(c) {
                return invalid(format!("boundary cell ({}, {}) is not a wall", c.x, c.z));
            }
            if walls.is_set(c) && navgrid.is_set(c) {
                return invalid(format!("navigable cell ({}, {}) is a wall", c.x, c.z));
            }
        }
        for (c, band) in &windows {
            if !walls.is_set(*c) {
                return invalid(format!("window on non-wall cell ({}, {})", c.x, c.z));
            }
            if !(0.0 <= band.lo && band.lo < band.hi && band.hi <= wall_height) {
                return invalid(format!("window band [{}, {}) out of range", band.lo, band.hi));
            }
        }
        let nav_count = navgrid.count();
        if nav_count == 0 {
            return invalid("navgrid is empty".into());
        }
        let first = navgrid.cells().find(|&c| navgrid.is_set(c)).expect("nonempty navgrid");
        if flood_fill_count(&navgrid, first) != nav_count {
            return invalid("navgrid is not a single 4-connected component".into());
        }
        Ok(Self { cell_size, wall_height, agent_height, walls, windows, navgrid, layers })
    }

    /// Builds a scene from an ASCII plan: `#` wall, `.` free, `w` wall with
    /// the given window band. Every free cell is navigable.
    pub fn from_ascii(
        plan: &str,
        cell_size: f64,
        wall_height: f64,
        agent_height: f64,
        window: Option<WindowBand>,
    ) -> Result<Self> {
        let rows: Vec<&str> = plan.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.chars().count());
        if rows.iter().any(|r| r.chars().count() != w) {
            return Err(Error::InvalidScene("ragged ASCII plan".into()));
        }
        let mut walls = Grid::new(w, h, false);
        let mut nav = Grid::new(w, h, false);
        let mut windows = BTreeMap::new();
        for (z, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                let c = Cell::new(x as i32, z as i32);
                match ch {
                    '#' => walls.set(c, true),
                    '.' => nav.set(c, true),
                    'w' => {
                        walls.set(c, true);
                        let band =
                            window.ok_or_else(|| Error::InvalidScene("plan has windows but no band given".into()))?;
                        windows.insert(c, band);
                    }
                    other => return Err(Error::InvalidScene(format!("unknown plan symbol '{other}'"))),
                }
            }
        }
        Scene::new(cell_size, wall_height, agent_height, walls, windows, nav)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn wall_height(&self) -> f64 {
        self.wall_height
    }

    pub fn agent_height(&self) -> f64 {
        self.agent_height
    }

    pub fn width(&self) -> usize {
        self.walls.width()
    }

    pub fn height(&self) -> usize {
        self.walls.height()
    }

    /// Number of vertical voxel layers.
    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Voxel layer containing the camera.
    pub fn agent_layer(&self) -> usize {
        ((self.agent_height / self.cell_size).floor() as usize).min(self.layers - 1)
    }

    pub fn walls(&self) -> &Grid<bool> {
        &self.walls
    }

    pub fn navgrid(&self) -> &Grid<bool> {
        &self.navgrid
    }

    pub fn windows(&self) -> &BTreeMap<Cell, WindowBand> {
        &self.windows
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.walls.is_set(c)
    }

    pub fn is_navigable(&self, c: Cell) -> bool {
        self.navgrid.is_set(c)
    }

    pub fn navigable_cells(&self) -> Vec<Cell> {
        self.navgrid.cells().filter(|&c| self.navgrid.is_set(c)).collect()
    }

    /// Solid voxel test; anything outside the horizontal bounds, below the
    /// floor or above the ceiling is solid.
    pub fn is_solid_voxel(&self, x: i32, layer: i32, z: i32) -> bool {
        if layer < 0 || layer >= self.layers as i32 {
            return true;
        }
        let c = Cell::new(x, z);
        if !self.walls.contains(c) {
            return true;
        }
        if !self.walls.is_set(c) {
            return false;
        }
        match self.windows.get(&c) {
            Some(band) => !band.contains((layer as f64 + 0.5) * self.cell_size),
            None => true,
        }
    }

    /// Obstacle test at the agent's horizontal plane (out of bounds = obstacle).
    pub fn blocked_at_agent_plane(&self, c: Cell) -> bool {
        if !self.walls.contains(c) {
            return true;
        }
        if !self.walls.is_set(c) {
            return false;
        }
        !self.windows.get(&c).is_some_and(|b| b.contains(self.agent_height))
    }

    /// World-space horizontal center of a cell.
    pub fn cell_center(&self, c: Cell) -> (f64, f64) {
        ((c.x as f64 + 0.5) * self.cell_size, (c.z as f64 + 0.5) * self.cell_size)
    }
}
