use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geom::{Cell, Grid, UNREACHED};

const NO_PARENT: u32 = u32::MAX;

/// Single-source shortest paths over 4-connected free cells with unit edge
/// weights. Every path read from the tree is a shortest path, and so is each
/// of its sub-paths.
#[derive(Clone, Debug)]
pub struct PathTree {
    start: Cell,
    dist: Grid<u32>,
    parent: Grid<u32>,
}

impl PathTree {
    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn distance(&self, c: Cell) -> Option<u32> {
        self.dist.get(c).copied().filter(|&d| d != UNREACHED)
    }

    pub fn parent(&self, c: Cell) -> Option<Cell> {
        let p = *self.parent.get(c)?;
        (p != NO_PARENT).then(|| self.parent.cell_at(p as usize))
    }

    pub fn distances(&self) -> &Grid<u32> {
        &self.dist
    }

    /// Cells from the start to `goal` inclusive, or `None` if unreachable.
    pub fn path_to(&self, goal: Cell) -> Option<Vec<Cell>> {
        self.distance(goal)?;
        let mut out = vec![goal];
        let mut c = goal;
        while let Some(p) = self.parent(c) {
            out.push(p);
            c = p;
        }
        out.reverse();
        Some(out)
    }

    /// Reachable cells in order of increasing distance (ties by index).
    pub fn reachable(&self) -> Vec<Cell> {
        let mut cells: Vec<(u32, usize)> =
            self.dist.data().iter().enumerate().filter(|(_, &d)| d != UNREACHED).map(|(i, &d)| (d, i)).collect();
        cells.sort_unstable();
        cells.into_iter().map(|(_, i)| self.dist.cell_at(i)).collect()
    }
}

/// Dijkstra from `start` over the set cells of `free`. Neighbors are relaxed
/// in the fixed order +x, -x, +z, -z and the queue breaks ties by cell
/// index, so the tree is deterministic.
pub fn shortest_path_tree(free: &Grid<bool>, start: Cell) -> Result<PathTree> {
    if !free.is_set(start) {
        return Err(Error::StartBlocked(start));
    }
    let mut dist = Grid::new(free.width(), free.height(), UNREACHED);
    let mut parent = Grid::new(free.width(), free.height(), NO_PARENT);
    let start_idx = free.index(start).expect("start inside grid");
    dist.set(start, 0);
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u32, start_idx)));
    while let Some(Reverse((d, idx))) = heap.pop() {
        if d > dist.data()[idx] {
            continue;
        }
        let c = free.cell_at(idx);
        for n in c.neighbors4() {
            if !free.is_set(n) {
                continue;
            }
            let nd = d + 1;
            let ni = free.index(n).expect("free cell inside grid");
            if nd < dist.data()[ni] {
                dist.data_mut()[ni] = nd;
                parent.data_mut()[ni] = idx as u32;
                heap.push(Reverse((nd, ni)));
            }
        }
    }
    Ok(PathTree { start, dist, parent })
}

/// Shortest 4-connected path of free cells from `start` to `goal`.
pub fn dijkstra_path(free: &Grid<bool>, start: Cell, goal: Cell) -> Result<Option<Vec<Cell>>> {
    let tree = shortest_path_tree(free, start)?;
    Ok(tree.path_to(goal))
}
