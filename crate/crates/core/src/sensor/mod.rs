//! Depth sensing by voxel raycasting and the accumulated surfel cloud.

mod cloud;
mod raycast;
mod views;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Cell, Point3};
use crate::worldgen::Scene;

pub use cloud::{integrate, SurfelCloud, VoxelKey, DEDUP_SUBDIVISION};
pub use raycast::{cast_ray, RayHit, SurfaceKind};
pub use views::{Observation, ViewCache, ViewSummary};

/// Number of discrete yaw headings (45 degree increments).
pub const N_YAW: usize = 8;

/// Pinhole depth camera with square pixels and principal point at the
/// image center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    /// Standard deviation of additive zero-mean depth noise (meters).
    pub depth_noise_std: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { width: 64, height: 48, hfov_deg: 90.0, depth_noise_std: 0.0 }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParams("camera image must be non-empty".into()));
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return Err(Error::InvalidParams("hfov must lie in (0, 180) degrees".into()));
        }
        Ok(())
    }

    pub fn focal(&self) -> f64 {
        self.width as f64 / (2.0 * (self.hfov_deg.to_radians() / 2.0).tan())
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// `K^-1 [u v 1]^T` in the camera frame (x right, y down, z forward).
    pub fn unproject(&self, u: usize, v: usize) -> Point3 {
        let f = self.focal();
        let (cx, cy) = self.principal_point();
        Point3::new((u as f64 - cx) / f, (v as f64 - cy) / f, 1.0)
    }
}

/// Agent camera state: grid cell plus discrete yaw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    pub yaw: u8,
}

impl Pose {
    pub const fn new(cell: Cell, yaw: u8) -> Self {
        Self { cell, yaw }
    }

    pub fn yaw_radians(&self) -> f64 {
        (self.yaw as f64) * std::f64::consts::TAU / N_YAW as f64
    }

    /// Camera center in world coordinates.
    pub fn position(&self, scene: &Scene) -> Point3 {
        let (x, z) = scene.cell_center(self.cell);
        Point3::new(x, scene.agent_height(), z)
    }

    /// World-frame camera axes `(right, down, forward)`.
    pub fn axes(&self) -> (Point3, Point3, Point3) {
        let (s, c) = self.yaw_radians().sin_cos();
        let forward = Point3::new(c, 0.0, s);
        let right = Point3::new(-s, 0.0, c);
        let down = Point3::new(0.0, -1.0, 0.0);
        (right, down, forward)
    }

    /// Unit world-frame ray through pixel `(u, v)`.
    pub fn ray_direction(&self, cam: &CameraModel, u: usize, v: usize) -> Point3 {
        let d = cam.unproject(u, v);
        let (right, down, forward) = self.axes();
        (right * d.x + down * d.y + forward * d.z).normalized()
    }
}

/// Per-pixel euclidean range in meters; 0 marks no return.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }
}

fn check_pose(scene: &Scene, pose: Pose) -> Result<()> {
    if !scene.is_navigable(pose.cell) {
        return Err(Error::OffNavgrid(pose.cell));
    }
    if pose.yaw as usize >= N_YAW {
        return Err(Error::InvalidParams(format!("yaw index {} out of range", pose.yaw)));
    }
    Ok(())
}

/// Renders a depth image by exact 3D DDA traversal of the voxelized scene.
pub fn render_depth(scene: &Scene, pose: Pose, cam: &CameraModel) -> Result<DepthImage> {
    check_pose(scene, pose)?;
    cam.validate()?;
    let origin = pose.position(scene);
    let mut data = Vec::with_capacity(cam.width * cam.height);
    for v in 0..cam.height {
        for u in 0..cam.width {
            let hit = cast_ray(scene, origin, pose.ray_direction(cam, u, v), usize::MAX, &mut |_| {});
            data.push(hit.distance);
        }
    }
    Ok(DepthImage { width: cam.width, height: cam.height, data })
}

/// Adds zero-mean gaussian noise with the given deviation to every return.
pub fn add_depth_noise(depth: &mut DepthImage, std: f64, rng: &mut impl rand::Rng) {
    let Ok(normal) = rand_distr::Normal::new(0.0, std) else {
        return;
    };
    if std <= 0.0 {
        return;
    }
    for d in depth.data.iter_mut().filter(|d| **d > 0.0) {
        *d = (*d + rng.sample(normal)).max(1e-6);
    }
}

/// Lifts every positive-depth pixel to a world-space point:
/// `p = T * (D(u,v) * normalize(K^-1 [u v 1]^T))`.
pub fn backproject(scene: &Scene, depth: &DepthImage, pose: Pose, cam: &CameraModel) -> Vec<Point3> {
    let origin = pose.position(scene);
    let mut out = Vec::with_capacity(depth.data.len());
    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = depth.at(u, v);
            if d > 0.0 {
                out.push(origin + pose.ray_direction(cam, u, v) * d);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
