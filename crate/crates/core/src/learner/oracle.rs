use crate::agent::{AgentState, World};
use crate::coverage::coverage_fraction;
use crate::error::{Error, Result};
use crate::geom::{Cell, Grid};
use crate::planning::{shortest_path_tree, ObstacleMap, Prediction, Predictor, ValueMap};
use crate::sensor::{Pose, N_YAW};
use crate::worldgen::obstacle_slice;

/// Brute-force "perfect" predictor.
///
/// The obstacle map is the exact slice of the scene at agent height. The
/// value of a window cell and yaw is the coverage gain of walking the true
/// shortest path to that cell, looking along the way in the direction that
/// maximizes the running gain, and finally looking along the given yaw.
/// Unreachable cells get 0.
#[derive(Clone, Debug)]
pub struct OraclePredictor {
    /// Values are computed on every `stride`-th pixel per axis and copied
    /// from the nearest computed pixel elsewhere.
    pub stride: usize,
}

impl Default for OraclePredictor {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

impl Predictor for OraclePredictor {
    fn predict(&self, world: &World, state: &AgentState) -> Result<Prediction> {
        oracle_predict(world, state, self.stride)
    }
}

pub fn oracle_predict(world: &World, state: &AgentState, stride: usize) -> Result<Prediction> {
    if stride == 0 {
        return Err(Error::InvalidParams("oracle stride must be at least 1".into()));
    }
    let window = world.window();
    let scene = world.scene();
    let center = state.pose;
    let slice = obstacle_slice(scene, center, window);
    let obstacle_map = ObstacleMap::from_binary(&slice, window, center);

    let (w, h) = (window.grid_w, window.grid_h);
    let walkable = Grid::from_vec(
        w,
        h,
        slice
            .cells()
            .map(|px| {
                !slice.is_set(px) && scene.is_navigable(window.cell_of_pixel(center.cell, px.x as usize, px.z as usize))
            })
            .collect(),
    );
    let root = Cell::new((w / 2) as i32, (h / 2) as i32);
    let tree = shortest_path_tree(&walkable, root)?;

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); w * h];
    for px in tree.reachable() {
        if let Some(p) = tree.parent(px) {
            children[walkable.index(p).expect("in grid")].push(walkable.index(px).expect("in grid"));
        }
    }

    let n_gt = world.n_gt();
    let base = state.tracker.count();
    let base_cov = coverage_fraction(base, n_gt);
    let mut covered = state.tracker.flags().to_vec();
    let mut count = base;
    let mut undo: Vec<u32> = Vec::new();
    let mut values = ValueMap::zeros(window, center);

    // Iterative DFS; each frame is (pixel index, undo mark, entered).
    let root_idx = walkable.index(root).expect("in grid");
    let mut stack = vec![(root_idx, 0usize, false)];
    while let Some((idx, mark, entered)) = stack.pop() {
        if entered {
            for id in undo.drain(mark..) {
                covered[id as usize] = false;
                count -= 1;
            }
            continue;
        }
        let px = walkable.cell_at(idx);
        let cell = window.cell_of_pixel(center.cell, px.x as usize, px.z as usize);
        let mut best = (0usize, 0usize);
        for yaw in 0..N_YAW {
            let view = world.view(Pose::new(cell, yaw as u8))?;
            let gain = view.covered.iter().filter(|&&id| !covered[id as usize]).count();
            let slot = values.index(px.x as usize, px.z as usize, yaw);
            values.values[slot] = coverage_fraction(count + gain, n_gt) - base_cov;
            if yaw == 0 || gain > best.0 {
                best = (gain, yaw);
            }
        }
        let mark = undo.len();
        // The agent's own cell is not part of any path's motion; paths leave
        // it without turning.
        if idx != root_idx {
            let view = world.view(Pose::new(cell, best.1 as u8))?;
            for &id in &view.covered {
                if !covered[id as usize] {
                    covered[id as usize] = true;
                    count += 1;
                    undo.push(id);
                }
            }
        }
        stack.push((idx, mark, true));
        for &c in children[idx].iter().rev() {
            stack.push((c, 0, false));
        }
    }

    if stride > 1 {
        let computed = values.values.clone();
        let snap = |a: usize, n: usize| {
            let r = ((a as f64 / stride as f64).round() as usize) * stride;
            if r >= n {
                ((n - 1) / stride) * stride
            } else {
                r
            }
        };
        for v in 0..h {
            for u in 0..w {
                let (su, sv) = (snap(u, w), snap(v, h));
                for yaw in 0..N_YAW {
                    let dst = values.index(u, v, yaw);
                    values.values[dst] = computed[values.index(su, sv, yaw)];
                }
            }
        }
    }
    Ok(Prediction { value_map: values, obstacle_map })
}
