use std::collections::{BTreeSet, VecDeque};

use crate::geom::{Cell, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKnowledge {
    Unknown,
    Free,
    Obstacle,
}

/// What the agent has learned about traversability at its own height.
///
/// Cells become free when traversed or crossed by an agent-height ray and
/// become obstacles when such a ray stops on them. Free evidence wins over
/// obstacle evidence, except for cells the agent was refused entry to.
#[derive(Clone, Debug, PartialEq)]
pub struct KnownMap {
    cells: Grid<CellKnowledge>,
    bumped: Grid<bool>,
}

impl KnownMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self { cells: Grid::new(width, height, CellKnowledge::Unknown), bumped: Grid::new(width, height, false) }
    }

    /// Knowledge at `c`; outside the map counts as an obstacle.
    pub fn get(&self, c: Cell) -> CellKnowledge {
        self.cells.get(c).copied().unwrap_or(CellKnowledge::Obstacle)
    }

    pub fn set(&mut self, c: Cell, k: CellKnowledge) {
        if self.cells.contains(c) {
            self.cells.set(c, k);
        }
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.get(c) == CellKnowledge::Free
    }

    pub fn is_unknown(&self, c: Cell) -> bool {
        self.get(c) == CellKnowledge::Unknown
    }

    pub fn mark_traversed(&mut self, c: Cell) {
        self.set(c, CellKnowledge::Free);
    }

    pub fn mark_bumped(&mut self, c: Cell) {
        if self.cells.contains(c) {
            self.bumped.set(c, true);
            self.cells.set(c, CellKnowledge::Obstacle);
        }
    }

    pub fn absorb_view(&mut self, free: &[Cell], blocked: &[Cell]) {
        for &c in free {
            if !self.bumped.is_set(c) {
                self.set(c, CellKnowledge::Free);
            }
        }
        for &c in blocked {
            if self.is_unknown(c) {
                self.set(c, CellKnowledge::Obstacle);
            }
        }
    }

    pub fn count(&self, k: CellKnowledge) -> usize {
        self.cells.data().iter().filter(|&&x| x == k).count()
    }

    /// Breadth-first search over known-free cells from `agent` for the
    /// nearest cell with an unknown 4-neighbor outside `skip`. Returns the
    /// route (agent first) and that unknown neighbor.
    pub fn frontier_route(&self, agent: Cell, skip: &BTreeSet<Cell>) -> Option<(Vec<Cell>, Cell)> {
        if !self.is_free(agent) {
            return None;
        }
        let mut parent: Grid<Option<Cell>> = Grid::new(self.cells.width(), self.cells.height(), None);
        let mut seen = Grid::new(self.cells.width(), self.cells.height(), false);
        let mut queue = VecDeque::from([agent]);
        seen.set(agent, true);
        while let Some(c) = queue.pop_front() {
            if let Some(target) = c.neighbors4().into_iter().find(|&n| self.is_unknown(n) && !skip.contains(&n)) {
                let mut route = vec![c];
                let mut cur = c;
                while let Some(p) = parent.get(cur).copied().flatten() {
                    route.push(p);
                    cur = p;
                }
                route.reverse();
                return Some((route, target));
            }
            for n in c.neighbors4() {
                if self.is_free(n) && !seen.is_set(n) {
                    seen.set(n, true);
                    parent.set(n, Some(c));
                    queue.push_back(n);
                }
            }
        }
        None
    }
}

/// Nearest known-free cell adjacent to unknown space, by BFS distance.
pub fn frontier_goal(known: &KnownMap, agent: Cell) -> Option<Cell> {
    known.frontier_route(agent, &BTreeSet::new()).map(|(route, _)| *route.last().expect("route has the agent"))
}
