use std::sync::{Arc, OnceLock};

use super::{cast_ray, check_pose, CameraModel, Pose, SurfaceKind, VoxelKey, N_YAW};
use crate::error::{Error, Result};
use crate::geom::{Cell, Point3};
use crate::spatial::SpatialIndex;
use crate::worldgen::Scene;

/// One depth frame lifted to world points, plus what the agent-layer rays
/// revealed about traversability.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub pose: Pose,
    pub points: Vec<Point3>,
    /// Columns a ray crossed at the camera's layer (sorted, unique).
    pub free_cells: Vec<Cell>,
    /// Wall columns hit at the camera's layer (sorted, unique).
    pub blocked_cells: Vec<Cell>,
}

impl Observation {
    /// Renders `pose` and back-projects every pixel in one pass. The points
    /// are exactly those of `backproject(render_depth(..))`.
    pub fn capture(scene: &Scene, pose: Pose, cam: &CameraModel) -> Result<Self> {
        check_pose(scene, pose)?;
        cam.validate()?;
        let origin = pose.position(scene);
        let layer = scene.agent_layer();
        let mut points = Vec::with_capacity(cam.width * cam.height);
        let mut free_cells = Vec::new();
        let mut blocked_cells = Vec::new();
        for v in 0..cam.height {
            for u in 0..cam.width {
                let dir = pose.ray_direction(cam, u, v);
                let hit = cast_ray(scene, origin, dir, layer, &mut |c| free_cells.push(c));
                points.push(origin + dir * hit.distance);
                if hit.kind == SurfaceKind::Wall && hit.voxel.1 == layer as i32 {
                    blocked_cells.push(Cell::new(hit.voxel.0, hit.voxel.2));
                }
            }
        }
        free_cells.sort_unstable();
        free_cells.dedup();
        blocked_cells.sort_unstable();
        blocked_cells.dedup();
        Ok(Self { pose, points, free_cells, blocked_cells })
    }
}

/// What a single view contributes: its dedup voxels, the ground-truth
/// surfels those voxels cover, and its traversability evidence.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSummary {
    /// Unique voxel keys in first-seen pixel order.
    pub keys: Vec<VoxelKey>,
    /// Sorted ids of ground-truth surfels within epsilon of some key center.
    pub covered: Vec<u32>,
    pub free_cells: Vec<Cell>,
    pub blocked_cells: Vec<Cell>,
}

/// Lazily computed, thread-safe per-pose view summaries for one scene.
///
/// Coverage is a union over voxel centers, so the gain of any set of views
/// is the size of the union of their `covered` lists minus what was already
/// covered; planners and oracles use this instead of re-rendering.
pub struct ViewCache {
    scene: Arc<Scene>,
    cam: CameraModel,
    gt: Arc<SpatialIndex>,
    epsilon: f64,
    resolution: f64,
    slots: Vec<OnceLock<Arc<ViewSummary>>>,
}

impl ViewCache {
    pub fn new(scene: Arc<Scene>, cam: CameraModel, gt: Arc<SpatialIndex>, epsilon: f64, resolution: f64) -> Self {
        let n = scene.width() * scene.height() * N_YAW;
        Self { scene, cam, gt, epsilon, resolution, slots: (0..n).map(|_| OnceLock::new()).collect() }
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn camera(&self) -> &CameraModel {
        &self.cam
    }

    pub fn get(&self, pose: Pose) -> Result<Arc<ViewSummary>> {
        check_pose(&self.scene, pose)?;
        let idx = self.scene.navgrid().index(pose.cell).ok_or(Error::OffNavgrid(pose.cell))?;
        let slot = &self.slots[idx * N_YAW + pose.yaw as usize];
        if let Some(s) = slot.get() {
            return Ok(s.clone());
        }
        let summary = Arc::new(self.summarize(pose)?);
        Ok(slot.get_or_init(|| summary).clone())
    }

    fn summarize(&self, pose: Pose) -> Result<ViewSummary> {
        let obs = Observation::capture(&self.scene, pose, &self.cam)?;
        let r = self.resolution;
        let mut seen = std::collections::HashSet::new();
        let mut keys = Vec::new();
        for p in &obs.points {
            let k = VoxelKey::of(*p, r);
            if seen.insert(k) {
                keys.push(k);
            }
        }
        let mut covered = Vec::new();
        for k in &keys {
            self.gt.for_each_within(k.center(r), self.epsilon, |id, _| covered.push(id));
        }
        covered.sort_unstable();
        covered.dedup();
        Ok(ViewSummary { keys, covered, free_cells: obs.free_cells, blocked_cells: obs.blocked_cells })
    }
}
