use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    argmax_index, assign_orientations, boltzmann_index, shortest_path_tree, CellKnowledge, Mode, Path, Prediction,
    Predictor, GOAL_RETRIES,
};
use crate::agent::{AgentState, World};
use crate::error::Result;
use crate::geom::{Cell, Grid};
use crate::sensor::{Pose, N_YAW};
use crate::worldgen::obstacle_slice;

/// A decision policy: given the current state, produce the next path to
/// execute. Planners may keep per-episode memory.
pub trait Planner: Send {
    fn name(&self) -> &str;
    fn plan(&mut self, world: &World, state: &AgentState, rng: &mut ChaCha8Rng) -> Result<Path>;
}

/// Yaw index of the unit move `from -> to` (+x is yaw 0, +z is yaw 2).
pub fn yaw_towards(from: Cell, to: Cell) -> u8 {
    match (to.x - from.x, to.z - from.z) {
        (1, 0) => 0,
        (0, 1) => 2,
        (-1, 0) => 4,
        _ => 6,
    }
}

fn rotate(pose: Pose) -> Path {
    vec![pose, Pose::new(pose.cell, (pose.yaw + 1) % N_YAW as u8)]
}

/// Turns a cell route into poses that face the direction of motion, the
/// last one facing `face` when given.
fn motion_path(start: Pose, route: &[Cell], face: Option<Cell>) -> Path {
    let mut path = vec![start];
    for w in route.windows(2) {
        path.push(Pose::new(w[1], yaw_towards(w[0], w[1])));
    }
    if let Some(target) = face {
        let last = *route.last().expect("nonempty route");
        let yaw = yaw_towards(last, target);
        if route.len() == 1 {
            path.push(Pose::new(last, yaw));
        } else {
            path.last_mut().expect("route has moves").yaw = yaw;
        }
    }
    path
}

/// Uniform choice among single-step moves into navigable neighbors, with
/// any yaw.
pub fn random_policy(world: &World, state: &AgentState, rng: &mut impl Rng) -> Pose {
    let moves: Vec<Pose> = state
        .pose
        .cell
        .neighbors4()
        .into_iter()
        .filter(|&c| world.scene().is_navigable(c))
        .flat_map(|c| (0..N_YAW as u8).map(move |y| Pose::new(c, y)))
        .collect();
    if moves.is_empty() {
        return Pose::new(state.pose.cell, rng.random_range(0..N_YAW as u8));
    }
    moves[rng.random_range(0..moves.len())]
}

pub struct RandomPlanner;

impl Planner for RandomPlanner {
    fn name(&self) -> &str {
        "random"
    }

    fn plan(&mut self, world: &World, state: &AgentState, rng: &mut ChaCha8Rng) -> Result<Path> {
        Ok(vec![state.pose, random_policy(world, state, rng)])
    }
}

/// Frontier-based exploration: walk over known-free cells to the nearest
/// frontier and look at the unknown cell. Frontiers that stay unknown after
/// being faced are given up.
#[derive(Default)]
pub struct FbePlanner {
    given_up: BTreeSet<Cell>,
}

impl FbePlanner {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Planner for FbePlanner {
    fn name(&self) -> &str {
        "fbe"
    }

    fn plan(&mut self, _world: &World, state: &AgentState, _rng: &mut ChaCha8Rng) -> Result<Path> {
        loop {
            let Some((route, target)) = state.known.frontier_route(state.pose.cell, &self.given_up) else {
                return Ok(rotate(state.pose));
            };
            if route.len() == 1 && state.pose.yaw == yaw_towards(route[0], target) {
                self.given_up.insert(target);
                continue;
            }
            return Ok(motion_path(state.pose, &route, Some(target)));
        }
    }
}

/// Candidate poses within `radius` steps on the true navgrid, scored by the
/// exact one-step coverage gain. Candidates are ordered current cell first
/// (all yaws), then by distance and cell index; ties keep the first.
pub fn greedy_nbv_goal(world: &World, state: &AgentState, radius: usize) -> Result<(Pose, Path)> {
    let tree = shortest_path_tree(world.scene().navgrid(), state.pose.cell)?;
    let mut best: Option<(usize, Pose)> = None;
    for cell in tree.reachable() {
        if tree.distance(cell).unwrap_or(u32::MAX) as usize > radius {
            break;
        }
        for yaw in 0..N_YAW as u8 {
            let pose = Pose::new(cell, yaw);
            let gain = state.tracker.gain_of(&world.view(pose)?.covered);
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, pose));
            }
        }
    }
    let (_, goal) = best.expect("the agent's own cell is a candidate");
    let route = tree.path_to(goal.cell).expect("candidate is reachable");
    let mut path = motion_path(state.pose, &route, None);
    if route.len() == 1 {
        path.push(goal);
    } else {
        path.last_mut().expect("route has moves").yaw = goal.yaw;
    }
    Ok((goal, path))
}

pub struct GreedyNbvPlanner {
    pub radius: usize,
}

impl Planner for GreedyNbvPlanner {
    fn name(&self) -> &str {
        "greedy-nbv"
    }

    fn plan(&mut self, world: &World, state: &AgentState, _rng: &mut ChaCha8Rng) -> Result<Path> {
        Ok(greedy_nbv_goal(world, state, self.radius)?.1)
    }
}

/// Where the NBP planner gets its routing map from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObstacleSource {
    Predicted,
    /// The exact slice of the scene at agent height.
    GroundTruth,
}

/// Next-best-path: predict value and obstacle maps, pick a long-term goal,
/// route to it along a shortest path and assign orientations.
pub struct NbpPlanner {
    pub name: String,
    pub predictor: Arc<dyn Predictor>,
    pub mode: Mode,
    pub beta: f64,
    pub obstacles: ObstacleSource,
}

impl NbpPlanner {
    /// Routing grid in window coordinates: the chosen obstacle source, with
    /// visited cells free, refused cells blocked and the agent's cell free.
    pub fn routing_grid(&self, world: &World, state: &AgentState, pred: &Prediction) -> Grid<bool> {
        let window = world.window();
        let center = state.pose.cell;
        let mut free = match self.obstacles {
            ObstacleSource::Predicted => {
                // Observations override the prediction; it only fills in unseen cells.
                let mut free = pred.obstacle_map.free_grid();
                for v in 0..window.grid_h {
                    for u in 0..window.grid_w {
                        match state.known.get(window.cell_of_pixel(center, u, v)) {
                            CellKnowledge::Free => free.set(Cell::new(u as i32, v as i32), true),
                            CellKnowledge::Obstacle => free.set(Cell::new(u as i32, v as i32), false),
                            CellKnowledge::Unknown => {}
                        }
                    }
                }
                free
            }
            ObstacleSource::GroundTruth => {
                let slice = obstacle_slice(world.scene(), state.pose, window);
                Grid::from_vec(slice.width(), slice.height(), slice.data().iter().map(|&b| !b).collect())
            }
        };
        for p in &state.history {
            if let Some((u, v)) = window.pixel_of_cell(center, p.cell) {
                free.set(Cell::new(u as i32, v as i32), true);
            }
        }
        for &c in &state.bumped {
            if let Some((u, v)) = window.pixel_of_cell(center, c) {
                free.set(Cell::new(u as i32, v as i32), false);
            }
        }
        let (cu, cv) = (window.grid_w / 2, window.grid_h / 2);
        free.set(Cell::new(cu as i32, cv as i32), true);
        free
    }

    /// Plans from an already computed prediction.
    pub fn plan_with(
        &self,
        world: &World,
        state: &AgentState,
        pred: &Prediction,
        rng: &mut ChaCha8Rng,
    ) -> Result<Path> {
        let m = &pred.value_map;
        m.validate()?;
        let window = world.window();
        let center_px = Cell::new((window.grid_w / 2) as i32, (window.grid_h / 2) as i32);
        let free = self.routing_grid(world, state, pred);
        let tree = shortest_path_tree(&free, center_px)?;
        let acceptable = |idx: usize| {
            let (u, v, _) = m.unflatten(idx);
            m.pose_at(idx) != state.pose && tree.distance(Cell::new(u as i32, v as i32)).is_some()
        };
        let goal = match self.mode {
            Mode::Argmax => {
                let mut order: Vec<usize> = (0..m.values.len()).collect();
                order.sort_by(|&a, &b| m.values[b].total_cmp(&m.values[a]).then(a.cmp(&b)));
                debug_assert_eq!(order.first().copied(), Some(argmax_index(&m.values)));
                order.into_iter().take(GOAL_RETRIES).find(|&i| acceptable(i))
            }
            Mode::Sample => {
                let mut found = None;
                for _ in 0..GOAL_RETRIES {
                    let i = boltzmann_index(&m.values, self.beta, rng)?;
                    if acceptable(i) {
                        found = Some(i);
                        break;
                    }
                }
                found
            }
        };
        if let Some(idx) = goal {
            let (u, v, yaw) = m.unflatten(idx);
            let pixels = tree.path_to(Cell::new(u as i32, v as i32)).expect("goal is reachable");
            let cells: Vec<Cell> =
                pixels.iter().map(|p| window.cell_of_pixel(state.pose.cell, p.x as usize, p.z as usize)).collect();
            if cells.len() == 1 {
                return Ok(vec![state.pose, Pose::new(cells[0], yaw as u8)]);
            }
            let mut path = vec![state.pose];
            path.extend(assign_orientations(&cells[1..], m, self.mode, self.beta, rng)?);
            path.last_mut().expect("path has a goal").yaw = yaw as u8;
            return Ok(path);
        }
        if let Some((route, target)) = state.known.frontier_route(state.pose.cell, &BTreeSet::new()) {
            if route.len() > 1 || state.pose.yaw != yaw_towards(route[0], target) {
                return Ok(motion_path(state.pose, &route, Some(target)));
            }
        }
        Ok(vec![state.pose, random_policy(world, state, rng)])
    }
}

impl Planner for NbpPlanner {
    fn name(&self) -> &str {
        &self.name
    }

    fn plan(&mut self, world: &World, state: &AgentState, rng: &mut ChaCha8Rng) -> Result<Path> {
        let pred = self.predictor.predict(world, state)?;
        self.plan_with(world, state, &pred, rng)
    }
}
