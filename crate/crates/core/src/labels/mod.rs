//! Training data: rollouts, sub-path coverage-gain labels, obstacle targets
//! and the replay memory.

mod memory;
mod rollout;

use serde::{Deserialize, Serialize};

use crate::coverage::{coverage, CoverageConfig};
use crate::error::{Error, Result};
use crate::geom::{Grid, Point3};
use crate::progress::{ExplorationEmbedding, WindowSpec};
use crate::sensor::{Pose, SurfelCloud};
use crate::worldgen::{obstacle_slice, Scene};

pub use memory::{
    memory_update_and_batch, read_records, write_records, MemoryEntry, ReplayMemory, CURRICULUM_MIN_STEP,
};
pub use rollout::{rollout_collect, Rollout};

/// Supervised value: the coverage gained by walking from the sample's pose
/// to pixel `(u, v)` of its window, arriving with `yaw`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueLabel {
    pub u: u16,
    pub v: u16,
    pub yaw: u8,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub embedding: ExplorationEmbedding,
    pub value_labels: Vec<ValueLabel>,
    /// Obstacles at agent height on the window grid.
    pub obstacle_gt: Grid<bool>,
    /// Executed steps before this pose in its trajectory.
    pub step_index: usize,
}

/// Labels for every sub-path of `path`, given the coverage after observing
/// each pose. Entry `i` holds the labels of start pose `i` (for `i < m` on a
/// path of `m + 1` poses): `coverage[j] - coverage[i]` for every `j > i`,
/// placed in the window centered on pose `i`. Targets outside that window
/// are dropped.
pub fn labels_from_coverage(path: &[Pose], coverage: &[f64], window: &WindowSpec) -> Result<Vec<Vec<ValueLabel>>> {
    if path.len() != coverage.len() {
        return Err(Error::Precondition("one coverage value per path pose is required".into()));
    }
    let m = path.len().saturating_sub(1);
    Ok((0..m)
        .map(|i| {
            (i + 1..path.len())
                .filter_map(|j| {
                    let (u, v) = window.pixel_of_cell(path[i].cell, path[j].cell)?;
                    Some(ValueLabel { u: u as u16, v: v as u16, yaw: path[j].yaw, gain: coverage[j] - coverage[i] })
                })
                .collect()
        })
        .collect())
}

/// Sub-path labels computed from the reconstruction after each pose.
pub fn subpath_gains(
    path: &[Pose],
    snapshots: &[SurfelCloud],
    gt: &[Point3],
    cfg: &CoverageConfig,
    window: &WindowSpec,
) -> Result<Vec<Vec<ValueLabel>>> {
    if path.len() != snapshots.len() {
        return Err(Error::Precondition("snapshots must align with path poses".into()));
    }
    let cov = snapshots.iter().map(|s| coverage(gt, &s.to_points(), cfg)).collect::<Result<Vec<_>>>()?;
    labels_from_coverage(path, &cov, window)
}

/// Obstacle target of a pose: the scene's occupancy at agent height.
pub fn obstacle_gt(scene: &Scene, pose: Pose, window: &WindowSpec) -> Grid<bool> {
    obstacle_slice(scene, pose, window)
}
