//! 8-connected grid A* with exact path costs.
//!
//! Costs are kept as `straight + diag * sqrt(2)` with integer counts and
//! compared exactly, so optimality checks never depend on rounding.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::ops::Add;

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    blocked: Vec<bool>,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, blocked: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut blocked: impl FnMut(Cell) -> bool) -> Self {
        let mut g = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                g.blocked[y * width + x] = blocked((x, y));
            }
        }
        g
    }

    pub fn index(&self, c: Cell) -> usize {
        c.1 * self.width + c.0
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn is_free(&self, c: Cell) -> bool {
        c.0 < self.width && c.1 < self.height && !self.blocked[self.index(c)]
    }

    pub fn set_blocked(&mut self, c: Cell, b: bool) {
        let i = self.index(c);
        self.blocked[i] = b;
    }

    /// Free neighbors with step costs. Diagonals need both orthogonal
    /// neighbors free, so paths never squeeze between touching corners.
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = (Cell, Cost)> + '_ {
        const D: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        let (x, y) = (c.0 as i64, c.1 as i64);
        D.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            if !self.in_bounds(nx, ny) || !self.is_free((nx as usize, ny as usize)) {
                return None;
            }
            if dx != 0 && dy != 0 && !(self.is_free((nx as usize, c.1)) && self.is_free((c.0, ny as usize))) {
                return None;
            }
            let cost = if dx != 0 && dy != 0 { Cost::DIAG } else { Cost::STRAIGHT };
            Some(((nx as usize, ny as usize), cost))
        })
    }
}

/// `straight + diag * sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Cost {
    pub straight: u32,
    pub diag: u32,
}

impl Cost {
    pub const ZERO: Cost = Cost { straight: 0, diag: 0 };
    pub const STRAIGHT: Cost = Cost { straight: 1, diag: 0 };
    pub const DIAG: Cost = Cost { straight: 0, diag: 1 };

    pub fn value(&self) -> f64 {
        self.straight as f64 + self.diag as f64 * std::f64::consts::SQRT_2
    }

    pub fn octile(a: Cell, b: Cell) -> Cost {
        let dx = a.0.abs_diff(b.0) as u32;
        let dy = a.1.abs_diff(b.1) as u32;
        Cost { straight: dx.max(dy) - dx.min(dy), diag: dx.min(dy) }
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, o: Cost) -> Cost {
        Cost { straight: self.straight + o.straight, diag: self.diag + o.diag }
    }
}

impl Ord for Cost {
    fn cmp(&self, o: &Self) -> Ordering {
        // Sign of da + db*sqrt(2), decided in integers.
        let da = self.straight as i64 - o.straight as i64;
        let db = self.diag as i64 - o.diag as i64;
        match (da.signum(), db.signum()) {
            (0, s) | (s, 0) => s.cmp(&0),
            (a, b) if a == b => a.cmp(&0),
            (a, _) => {
                let lhs = da * da;
                let rhs = 2 * db * db;
                // lhs != rhs since sqrt(2) is irrational.
                if a > 0 {
                    lhs.cmp(&rhs)
                } else {
                    rhs.cmp(&lhs)
                }
            }
        }
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    pub cost: Cost,
}

pub fn astar_plan(grid: &Grid, start: Cell, goal: Cell) -> Option<GridPath> {
    if !grid.is_free(start) || !grid.is_free(goal) {
        return None;
    }
    let n = grid.width * grid.height;
    let mut g: Vec<Option<Cost>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let si = grid.index(start);
    g[si] = Some(Cost::ZERO);
    let h0 = Cost::octile(start, goal);
    open.push(Reverse((h0, h0, si)));
    while let Some(Reverse((_, _, i))) = open.pop() {
        if closed[i] {
            continue;
        }
        closed[i] = true;
        let c = (i % grid.width, i / grid.width);
        if c == goal {
            let mut cells = vec![c];
            let mut j = i;
            while parent[j] != usize::MAX {
                j = parent[j];
                cells.push((j % grid.width, j / grid.width));
            }
            cells.reverse();
            return Some(GridPath { cells, cost: g[i].expect("closed node has a cost") });
        }
        let gc = g[i].expect("popped node has a cost");
        for (nb, step) in grid.neighbors(c) {
            let ni = grid.index(nb);
            if closed[ni] {
                continue;
            }
            let ng = gc + step;
            if g[ni].is_none_or(|old| ng < old) {
                g[ni] = Some(ng);
                parent[ni] = i;
                let h = Cost::octile(nb, goal);
                open.push(Reverse((ng + h, h, ni)));
            }
        }
    }
    None
}
