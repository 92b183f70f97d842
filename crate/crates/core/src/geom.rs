//! Small geometric primitives shared by every module.
//!
//! World frame is y-up. The horizontal plane is (x, z); grid cells are
//! indexed by `(x, z)` integer coordinates with `cell_size` pitch.

use std::collections::VecDeque;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Point3 {
        self * (1.0 / self.norm())
    }

    pub fn dist(self, o: Point3) -> f64 {
        (self - o).norm()
    }

    pub fn dist2(self, o: Point3) -> f64 {
        let d = self - o;
        d.dot(d)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Integer cell on the horizontal grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub z: i32,
}

impl Cell {
    pub const fn new(x: i32, z: i32) -> Self {
        Self { x, z }
    }

    /// 4-neighbours in the fixed order +x, -x, +z, -z.
    pub fn neighbors4(self) -> [Cell; 4] {
        [
            Cell::new(self.x + 1, self.z),
            Cell::new(self.x - 1, self.z),
            Cell::new(self.x, self.z + 1),
            Cell::new(self.x, self.z - 1),
        ]
    }

    pub fn manhattan(self, o: Cell) -> u32 {
        self.x.abs_diff(o.x) + self.z.abs_diff(o.z)
    }

    pub fn offset(self, dx: i32, dz: i32) -> Cell {
        Cell::new(self.x + dx, self.z + dz)
    }
}

/// Dense row-major 2D grid (`z` rows of `x` columns).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length");
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= 0 && c.z >= 0 && (c.x as usize) < self.width && (c.z as usize) < self.height
    }

    pub fn index(&self, c: Cell) -> Option<usize> {
        self.contains(c).then(|| c.z as usize * self.width + c.x as usize)
    }

    pub fn cell_at(&self, idx: usize) -> Cell {
        Cell::new((idx % self.width) as i32, (idx / self.width) as i32)
    }

    pub fn get(&self, c: Cell) -> Option<&T> {
        self.index(c).map(|i| &self.data[i])
    }

    pub fn set(&mut self, c: Cell, v: T) {
        let i = self.index(c).expect("cell inside grid");
        self.data[i] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.data.len()).map(|i| self.cell_at(i))
    }
}

impl Grid<bool> {
    /// `true` iff `c` is inside the grid and set.
    pub fn is_set(&self, c: Cell) -> bool {
        self.get(c).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

pub const UNREACHED: u32 = u32::MAX;

/// Breadth-first 4-connected distances over the set cells of `free`.
pub fn bfs_distances(free: &Grid<bool>, start: Cell) -> Grid<u32> {
    let mut dist = Grid::new(free.width(), free.height(), UNREACHED);
    if !free.is_set(start) {
        return dist;
    }
    let mut queue = VecDeque::new();
    dist.set(start, 0);
    queue.push_back(start);
    while let Some(c) = queue.pop_front() {
        let d = dist.get(c).copied().unwrap_or(UNREACHED);
        for n in c.neighbors4() {
            if free.is_set(n) && dist.get(n) == Some(&UNREACHED) {
                dist.set(n, d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Number of cells reached by a 4-connected flood fill from `start`.
pub fn flood_fill_count(free: &Grid<bool>, start: Cell) -> usize {
    bfs_distances(free, start).data().iter().filter(|&&d| d != UNREACHED).count()
}
