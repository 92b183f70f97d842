//! Decision making: value and obstacle maps, Boltzmann and argmax goal
//! selection, shortest-path routing, path execution, and the planners.

mod execute;
mod known;
mod policies;
mod route;

use rand::Rng;

use crate::agent::{AgentState, World};
use crate::error::{Error, Result};
use crate::geom::{Cell, Grid};
use crate::progress::WindowSpec;
use crate::sensor::{Pose, N_YAW};

pub use execute::{execute_path, ExecOutcome, Halt};
pub use known::{frontier_goal, CellKnowledge, KnownMap};
pub use policies::{
    greedy_nbv_goal, random_policy, yaw_towards, FbePlanner, GreedyNbvPlanner, NbpPlanner, ObstacleSource, Planner,
    RandomPlanner,
};
pub use route::{dijkstra_path, shortest_path_tree, PathTree};

/// Default Boltzmann temperature on normalized gains.
pub const DEFAULT_BETA: f64 = 0.1;
/// Goal candidates tried before falling back to frontier exploration.
pub const GOAL_RETRIES: usize = 32;
/// Obstacle probabilities strictly above this are treated as blocked.
pub const OBSTACLE_THRESHOLD: f64 = 0.5;

/// Ordered poses from the agent's pose to the goal; consecutive cells are
/// equal or 4-adjacent.
pub type Path = Vec<Pose>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Boltzmann sampling (training).
    Sample,
    /// Deterministic maximum (inference).
    Argmax,
}

/// Predicted coverage gain per window pixel and yaw, flat index
/// `(v * W + u) * N_YAW + yaw`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueMap {
    pub values: Vec<f64>,
    pub window: WindowSpec,
    pub center: Pose,
}

impl ValueMap {
    pub fn zeros(window: &WindowSpec, center: Pose) -> Self {
        Self { values: vec![0.0; window.pixels() * N_YAW], window: window.clone(), center }
    }

    pub fn index(&self, u: usize, v: usize, yaw: usize) -> usize {
        (v * self.window.grid_w + u) * N_YAW + yaw
    }

    pub fn get(&self, u: usize, v: usize, yaw: usize) -> f64 {
        self.values[self.index(u, v, yaw)]
    }

    pub fn yaw_values(&self, u: usize, v: usize) -> &[f64] {
        let i = self.index(u, v, 0);
        &self.values[i..i + N_YAW]
    }

    /// `(u, v, yaw)` of a flat index.
    pub fn unflatten(&self, idx: usize) -> (usize, usize, usize) {
        let yaw = idx % N_YAW;
        let px = idx / N_YAW;
        (px % self.window.grid_w, px / self.window.grid_w, yaw)
    }

    /// Scene pose addressed by a flat index.
    pub fn pose_at(&self, idx: usize) -> Pose {
        let (u, v, yaw) = self.unflatten(idx);
        Pose::new(self.window.cell_of_pixel(self.center.cell, u, v), yaw as u8)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.window.pixels() * N_YAW {
            return Err(Error::Shape("value map size does not match its window".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("value map".into()));
        }
        Ok(())
    }
}

/// Predicted obstacle probability per window pixel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleMap {
    pub probs: Vec<f64>,
    pub window: WindowSpec,
    pub center: Pose,
}

impl ObstacleMap {
    /// Exact map from a binary obstacle grid (`true` = obstacle).
    pub fn from_binary(grid: &Grid<bool>, window: &WindowSpec, center: Pose) -> Self {
        Self { probs: grid.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(), window: window.clone(), center }
    }

    /// Free-cell grid in window coordinates: free iff the probability is at
    /// most [`OBSTACLE_THRESHOLD`]. The center pixel is always free.
    pub fn free_grid(&self) -> Grid<bool> {
        let w = &self.window;
        let data = self.probs.iter().map(|&p| p <= OBSTACLE_THRESHOLD).collect();
        let mut g = Grid::from_vec(w.grid_w, w.grid_h, data);
        g.set(Cell::new((w.grid_w / 2) as i32, (w.grid_h / 2) as i32), true);
        g
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub value_map: ValueMap,
    pub obstacle_map: ObstacleMap,
}

/// Anything that maps an agent state to a value map and an obstacle map.
pub trait Predictor: Send + Sync {
    fn predict(&self, world: &World, state: &AgentState) -> Result<Prediction>;
}

/// Draws an index with probability proportional to `exp(v / beta)`,
/// subtracting the maximum first for stability.
pub fn boltzmann_index(values: &[f64], beta: f64, rng: &mut impl Rng) -> Result<usize> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParams("temperature must be positive".into()));
    }
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Boltzmann input".into()));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values.iter().map(|v| ((v - max) / beta).exp()).collect();
    let total: f64 = weights.iter().sum();
    let draw = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc {
            return Ok(i);
        }
    }
    // rounding can leave `draw` at the very top of the range
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
}

/// First index of the maximum.
pub fn argmax_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn boltzmann_sample(m: &ValueMap, beta: f64, rng: &mut impl Rng) -> Result<Pose> {
    Ok(m.pose_at(boltzmann_index(&m.values, beta, rng)?))
}

/// Goal with the highest value; ties go to the lowest flat index.
pub fn argmax_goal(m: &ValueMap) -> Pose {
    m.pose_at(argmax_index(&m.values))
}

/// Picks a yaw for every position from that position's value-map entries.
pub fn assign_orientations(
    positions: &[Cell],
    m: &ValueMap,
    mode: Mode,
    beta: f64,
    rng: &mut impl Rng,
) -> Result<Path> {
    positions
        .iter()
        .map(|&c| {
            let (u, v) = m.window.pixel_of_cell(m.center.cell, c).ok_or(Error::OutsideWindow(c))?;
            let vals = m.yaw_values(u, v);
            let yaw = match mode {
                Mode::Argmax => argmax_index(vals),
                Mode::Sample => boltzmann_index(vals, beta, rng)?,
            };
            Ok(Pose::new(c, yaw as u8))
        })
        .collect()
}

#[cfg(test)]
mod tests;
