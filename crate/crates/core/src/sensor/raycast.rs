use crate::geom::{Cell, Point3};
use crate::worldgen::Scene;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurfaceKind {
    Wall,
    Floor,
    Ceiling,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    /// Euclidean distance from the origin to the hit point.
    pub distance: f64,
    pub point: Point3,
    /// Solid voxel that stopped the ray `(x, layer, z)`.
    pub voxel: (i32, i32, i32),
    pub kind: SurfaceKind,
}

/// Amanatides-Woo traversal of the scene voxels from `origin` along unit
/// direction `dir` until the first solid voxel.
///
/// `on_layer` is called with the column of every free voxel the ray crosses
/// on layer `watch_layer` (pass `usize::MAX` to disable). Out-of-bounds
/// voxels are solid, so the walk always terminates.
pub fn cast_ray(
    scene: &Scene,
    origin: Point3,
    dir: Point3,
    watch_layer: usize,
    on_layer: &mut dyn FnMut(Cell),
) -> RayHit {
    let cs = scene.cell_size();
    let o = [origin.x, origin.y, origin.z];
    let d = [dir.x, dir.y, dir.z];
    let mut idx = [0i32; 3];
    let mut step = [0i32; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        idx[a] = (o[a] / cs).floor() as i32;
        if d[a] > 0.0 {
            step[a] = 1;
            t_max[a] = ((idx[a] + 1) as f64 * cs - o[a]) / d[a];
            t_delta[a] = cs / d[a];
        } else if d[a] < 0.0 {
            step[a] = -1;
            t_max[a] = (idx[a] as f64 * cs - o[a]) / d[a];
            t_delta[a] = -cs / d[a];
        }
    }
    let watch = watch_layer as i64;
    let limit = 4 * (scene.width() + scene.height() + scene.layers() + 4);
    let mut t = 0.0;
    for _ in 0..limit {
        if scene.is_solid_voxel(idx[0], idx[1], idx[2]) {
            break;
        }
        if idx[1] as i64 == watch {
            on_layer(Cell::new(idx[0], idx[2]));
        }
        let a = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        t = t_max[a];
        t_max[a] += t_delta[a];
        idx[a] += step[a];
    }
    let kind = if idx[1] < 0 {
        SurfaceKind::Floor
    } else if idx[1] >= scene.layers() as i32 {
        SurfaceKind::Ceiling
    } else {
        SurfaceKind::Wall
    };
    RayHit { distance: t, point: origin + dir * t, voxel: (idx[0], idx[1], idx[2]), kind }
}
