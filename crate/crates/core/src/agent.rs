//! Simulation state shared by planners, label generation and the benchmark:
//! a scene with its ground truth and view cache, and one agent's evolving
//! reconstruction.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::coverage::{CoverageConfig, CoverageTracker};
use crate::error::{Error, Result};
use crate::geom::{Cell, Point3};
use crate::planning::KnownMap;
use crate::progress::{build_embedding, ExplorationEmbedding, WindowSpec};
use crate::sensor::{CameraModel, Pose, SurfelCloud, ViewCache, ViewSummary};
use crate::spatial::SpatialIndex;
use crate::worldgen::{gt_surface_points, Scene};

/// A scene plus everything derived from it once: ground-truth surfels, the
/// sensing and metric configuration, and cached per-pose views.
pub struct World {
    scene: Arc<Scene>,
    gt: Arc<SpatialIndex>,
    camera: CameraModel,
    coverage: CoverageConfig,
    window: WindowSpec,
    views: ViewCache,
}

impl World {
    /// Desk defaults: 64x48 camera, epsilon = cell size, 16 m / 32x32 window.
    pub fn new(scene: Scene) -> Result<Self> {
        let camera = CameraModel::default();
        let coverage = CoverageConfig::for_cell_size(scene.cell_size());
        let window = WindowSpec::desk(scene.cell_size(), scene.wall_height());
        Self::with_config(scene, camera, coverage, window)
    }

    pub fn with_config(
        scene: Scene,
        camera: CameraModel,
        coverage: CoverageConfig,
        window: WindowSpec,
    ) -> Result<Self> {
        camera.validate()?;
        coverage.validate()?;
        window.validate()?;
        if (window.cell_size - scene.cell_size()).abs() > 1e-12 {
            return Err(Error::InvalidParams("window cell size must match the scene".into()));
        }
        let gt_points = gt_surface_points(&scene);
        if gt_points.is_empty() {
            return Err(Error::EmptyGroundTruth);
        }
        let gt = Arc::new(SpatialIndex::new(gt_points, coverage.epsilon));
        let scene = Arc::new(scene);
        let resolution = SurfelCloud::for_cell_size(scene.cell_size()).resolution();
        let views = ViewCache::new(scene.clone(), camera.clone(), gt.clone(), coverage.epsilon, resolution);
        Ok(Self { scene, gt, camera, coverage, window, views })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn gt_points(&self) -> &[Point3] {
        self.gt.points()
    }

    pub fn n_gt(&self) -> usize {
        self.gt.len()
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn coverage_config(&self) -> &CoverageConfig {
        &self.coverage
    }

    pub fn window(&self) -> &WindowSpec {
        &self.window
    }

    pub fn view(&self, pose: Pose) -> Result<Arc<ViewSummary>> {
        self.views.get(pose)
    }

    pub fn empty_cloud(&self) -> SurfelCloud {
        SurfelCloud::for_cell_size(self.scene.cell_size())
    }
}

/// One agent's state during an episode.
#[derive(Clone, Debug)]
pub struct AgentState {
    pub pose: Pose,
    pub cloud: SurfelCloud,
    /// Every pose occupied so far, the current one last.
    pub history: Vec<Pose>,
    /// Cloud size after the observation at each history entry.
    pub cloud_lens: Vec<usize>,
    /// Covered ground-truth count after each history entry.
    pub covered_counts: Vec<usize>,
    pub tracker: CoverageTracker,
    pub known: KnownMap,
    /// Executed steps (the initial observation is free).
    pub steps: usize,
    /// Cells a move was refused into; planners treat them as obstacles.
    pub bumped: BTreeSet<Cell>,
}

impl AgentState {
    /// Places the agent at `start` and takes the initial observation.
    pub fn start(world: &World, start: Pose) -> Result<Self> {
        let scene = world.scene();
        let mut state = Self {
            pose: start,
            cloud: world.empty_cloud(),
            history: Vec::new(),
            cloud_lens: Vec::new(),
            covered_counts: Vec::new(),
            tracker: CoverageTracker::new(world.n_gt()),
            known: KnownMap::new(scene.width(), scene.height()),
            steps: 0,
            bumped: BTreeSet::new(),
        };
        state.observe(world, start)?;
        Ok(state)
    }

    fn observe(&mut self, world: &World, pose: Pose) -> Result<()> {
        let view = world.view(pose)?;
        for &k in &view.keys {
            self.cloud.insert_key(k);
        }
        self.tracker.absorb(&view.covered);
        self.known.mark_traversed(pose.cell);
        self.known.absorb_view(&view.free_cells, &view.blocked_cells);
        self.pose = pose;
        self.history.push(pose);
        self.cloud_lens.push(self.cloud.len());
        self.covered_counts.push(self.tracker.count());
        Ok(())
    }

    /// Moves to `pose` (a 4-neighbor or a rotation), observes, and counts a
    /// step. The caller is responsible for traversability.
    pub fn step_to(&mut self, world: &World, pose: Pose) -> Result<()> {
        if pose.cell.manhattan(self.pose.cell) > 1 {
            return Err(Error::Precondition("a step moves at most one cell".into()));
        }
        self.observe(world, pose)?;
        self.steps += 1;
        Ok(())
    }

    /// Records a refused move into `cell`.
    pub fn bump(&mut self, cell: Cell) {
        self.bumped.insert(cell);
        self.known.mark_bumped(cell);
    }

    pub fn coverage(&self) -> f64 {
        self.tracker.coverage()
    }

    pub fn embedding(&self, world: &World) -> ExplorationEmbedding {
        build_embedding(&self.cloud, &self.history, self.pose, world.window())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::coverage;
    use crate::worldgen::{generate_scene, DifficultyParams};

    #[test]
    fn incremental_coverage_equals_batch_coverage() {
        let scene = generate_scene(&DifficultyParams::preset("simple").unwrap().with_seed(8)).unwrap();
        let world = World::new(scene).unwrap();
        let cells = world.scene().navigable_cells();
        let mut state = AgentState::start(&world, Pose::new(cells[0], 0)).unwrap();
        let mut cur = cells[0];
        for i in 0..12u8 {
            let next = cur
                .neighbors4()
                .into_iter()
                .find(|&c| world.scene().is_navigable(c) && !state.history.iter().any(|p| p.cell == c))
                .unwrap_or(cur);
            state.step_to(&world, Pose::new(next, i % 8)).unwrap();
            cur = next;
            let batch = coverage(world.gt_points(), &state.cloud.to_points(), world.coverage_config()).unwrap();
            assert_eq!(state.coverage(), batch);
        }
        assert_eq!(state.steps, 12);
        assert_eq!(state.history.len(), 13);
        assert!(state.known.is_free(cells[0]));
    }
}
