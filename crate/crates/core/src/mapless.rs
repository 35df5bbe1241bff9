//! Robot-centered local costmap: scan/point fusion, island extraction,
//! approach-point selection and L-corner alignment.
//!
//! Cell `(i, j)` covers robot-frame `x in [(i - w/2) r, (i - w/2 + 1) r)`,
//! likewise for `y`; the robot sits in cell `(w/2, w/2)`.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::geom::{Pose2, P2, V2};
use crate::planner::astar::{astar_plan, Cell, Grid};
use crate::sim::sensors::Scan;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaplessError {
    #[error("seed cell {0:?} is not occupied")]
    SeedNotOccupied(Cell),
    #[error("cell {0:?} is outside the map")]
    OutOfMap(Cell),
    #[error("no path toward the customer")]
    NoPath,
    #[error("every path cell overlaps the island")]
    NoClearCell,
    #[error("no corner within the search radius")]
    NoCorner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapCell {
    Free,
    Occupied,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalCostmap {
    pub resolution: f64,
    pub width: usize,
    cells: Vec<MapCell>,
    /// False when fusion marked the robot's own cell occupied.
    pub consistent: bool,
}

impl LocalCostmap {
    pub fn unknown(width: usize, resolution: f64) -> Self {
        Self { resolution, width, cells: vec![MapCell::Unknown; width * width], consistent: true }
    }

    pub fn robot_cell(&self) -> Cell {
        (self.width / 2, self.width / 2)
    }

    pub fn get(&self, c: Cell) -> MapCell {
        self.cells[c.1 * self.width + c.0]
    }

    pub fn set(&mut self, c: Cell, v: MapCell) {
        let w = self.width;
        self.cells[c.1 * w + c.0] = v;
    }

    pub fn in_map(&self, c: Cell) -> bool {
        c.0 < self.width && c.1 < self.width
    }

    pub fn cell_of(&self, p: &P2) -> Option<Cell> {
        let half = (self.width / 2) as f64;
        let i = (p.x / self.resolution).floor() + half;
        let j = (p.y / self.resolution).floor() + half;
        (i >= 0.0 && j >= 0.0 && i < self.width as f64 && j < self.width as f64).then_some((i as usize, j as usize))
    }

    pub fn center(&self, c: Cell) -> P2 {
        let half = (self.width / 2) as f64;
        P2::new((c.0 as f64 - half + 0.5) * self.resolution, (c.1 as f64 - half + 0.5) * self.resolution)
    }

    pub fn cells(&self) -> impl Iterator<Item = (Cell, MapCell)> + '_ {
        let w = self.width;
        self.cells.iter().enumerate().map(move |(k, v)| ((k % w, k / w), *v))
    }

    /// Marks cells occupied, e.g. a detected customer.
    pub fn stamp(&mut self, p: &P2, radius: f64) {
        let cells: Vec<Cell> = self.cells().map(|(c, _)| c).filter(|c| (self.center(*c) - p).norm() <= radius).collect();
        for c in cells {
            self.set(c, MapCell::Occupied);
        }
        if let Some(c) = self.cell_of(p) {
            self.set(c, MapCell::Occupied);
        }
    }

    /// Binary graymap: free 255, unknown 128, occupied 0, island cells 64.
    /// The top row is the largest `y`.
    pub fn render_pgm(&self, island: Option<&Island>) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.width).into_bytes();
        for j in (0..self.width).rev() {
            for i in 0..self.width {
                let px = if island.is_some_and(|is| is.cells.contains(&(i, j))) {
                    64
                } else {
                    match self.get((i, j)) {
                        MapCell::Free => 255,
                        MapCell::Unknown => 128,
                        MapCell::Occupied => 0,
                    }
                };
                out.push(px);
            }
        }
        out
    }
}

/// Cells crossed by the segment `a -> b` (grid units), excluding the cell
/// containing `b`.
fn cells_before(a: P2, b: P2) -> Vec<(i64, i64)> {
    let d = b - a;
    let mut cell = [a.x.floor() as i64, a.y.floor() as i64];
    let end = [b.x.floor() as i64, b.y.floor() as i64];
    let mut step = [0i64; 2];
    let mut t_max = [f64::INFINITY; 2];
    let mut t_delta = [f64::INFINITY; 2];
    for ax in 0..2 {
        if d[ax] > 0.0 {
            step[ax] = 1;
            t_max[ax] = ((cell[ax] + 1) as f64 - a[ax]) / d[ax];
            t_delta[ax] = 1.0 / d[ax];
        } else if d[ax] < 0.0 {
            step[ax] = -1;
            t_max[ax] = (cell[ax] as f64 - a[ax]) / d[ax];
            t_delta[ax] = -1.0 / d[ax];
        }
    }
    let budget = (end[0] - cell[0]).abs() + (end[1] - cell[1]).abs() + 1;
    let mut out = Vec::new();
    for _ in 0..budget {
        if cell == end {
            break;
        }
        out.push((cell[0], cell[1]));
        let ax = if t_max[0] <= t_max[1] { 0 } else { 1 };
        if t_max[ax] > 1.0 {
            break;
        }
        cell[ax] += step[ax];
        t_max[ax] += t_delta[ax];
    }
    out
}

/// Fuses a scan and projected obstacle points (both robot frame). Occupied
/// is the union of scan endpoints and points; cells crossed by beams are
/// free unless occupied; the rest stay unknown.
pub fn fuse_local_map(scan: &Scan, projected: &[P2], width: usize, resolution: f64) -> LocalCostmap {
    let mut map = LocalCostmap::unknown(width, resolution);
    let half = (width / 2) as f64;
    let to_grid = |p: P2| P2::new(p.x / resolution + half, p.y / resolution + half);
    let mut occupied = BTreeSet::new();
    let mut free = BTreeSet::new();
    let origin = to_grid(P2::origin());
    for i in 0..scan.len() {
        let end = scan.point_local(i);
        for (x, y) in cells_before(origin, to_grid(end)) {
            if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < width {
                free.insert((x as usize, y as usize));
            }
        }
        if scan.is_hit(i) {
            if let Some(c) = map.cell_of(&end) {
                occupied.insert(c);
            }
        }
    }
    for p in projected {
        if let Some(c) = map.cell_of(p) {
            occupied.insert(c);
        }
    }
    for c in free {
        map.set(c, MapCell::Free);
    }
    for c in &occupied {
        map.set(*c, MapCell::Occupied);
    }
    map.consistent = !occupied.contains(&map.robot_cell());
    map
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Island {
    pub seed: Cell,
    pub cells: BTreeSet<Cell>,
}

fn neighbors8(c: Cell, w: usize) -> impl Iterator<Item = Cell> {
    let (x, y) = (c.0 as i64, c.1 as i64);
    (-1..=1).flat_map(move |dy| (-1..=1).map(move |dx| (x + dx, y + dy))).filter_map(move |(nx, ny)| {
        ((nx, ny) != (x, y) && nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < w).then_some((nx as usize, ny as usize))
    })
}

/// 8-connected flood fill over occupied cells.
pub fn find_island(map: &LocalCostmap, seed: Cell) -> Result<Island, MaplessError> {
    if !map.in_map(seed) {
        return Err(MaplessError::OutOfMap(seed));
    }
    if map.get(seed) != MapCell::Occupied {
        return Err(MaplessError::SeedNotOccupied(seed));
    }
    let mut cells = BTreeSet::from([seed]);
    let mut queue = VecDeque::from([seed]);
    while let Some(c) = queue.pop_front() {
        for n in neighbors8(c, map.width) {
            if map.get(n) == MapCell::Occupied && cells.insert(n) {
                queue.push_back(n);
            }
        }
    }
    Ok(Island { seed, cells })
}

/// Distance from a point to the square of a cell.
fn distance_to_cell(map: &LocalCostmap, p: &P2, c: Cell) -> f64 {
    let q = map.center(c);
    let h = map.resolution / 2.0;
    let dx = ((p.x - q.x).abs() - h).max(0.0);
    let dy = ((p.y - q.y).abs() - h).max(0.0);
    dx.hypot(dy)
}

/// True when a disc of `radius` at the center of `c` overlaps an island cell.
/// Touching is not overlapping.
pub fn footprint_overlaps(map: &LocalCostmap, c: Cell, island: &Island, radius: f64) -> bool {
    let p = map.center(c);
    island.cells.iter().any(|q| distance_to_cell(map, &p, *q) < radius - 1e-9)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproachTarget {
    pub cell: Cell,
    pub path: Vec<Cell>,
    pub island: Island,
    /// Robot-frame pose facing the customer.
    pub pose: Pose2,
}

/// Shortest path toward the customer through free, unknown and island
/// cells; the target is the farthest path cell whose footprint clears the
/// island.
pub fn approach_point(map: &LocalCostmap, robot: Cell, customer: Cell, robot_radius: f64) -> Result<ApproachTarget, MaplessError> {
    let island = find_island(map, customer)?;
    if !map.in_map(robot) {
        return Err(MaplessError::OutOfMap(robot));
    }
    let grid = Grid::from_fn(map.width, map.width, |c| map.get(c) == MapCell::Occupied && !island.cells.contains(&c));
    let path = astar_plan(&grid, robot, customer).ok_or(MaplessError::NoPath)?;
    let k = (0..path.cells.len())
        .rev()
        .find(|&k| !footprint_overlaps(map, path.cells[k], &island, robot_radius))
        .ok_or(MaplessError::NoClearCell)?;
    let cell = path.cells[k];
    let p = map.center(cell);
    let goal = map.center(customer);
    let heading = (goal.y - p.y).atan2(goal.x - p.x);
    Ok(ApproachTarget { cell, path: path.cells, island, pose: Pose2::new(p.x, p.y, heading) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerTemplate {
    /// Directions of the two arms from the vertex, each +1 or -1.
    pub sx: i64,
    pub sy: i64,
    pub min_run: usize,
    /// Dock pose position relative to the corner vertex.
    pub dock_offset: V2,
    pub dock_heading: f64,
    pub search_radius: f64,
}

fn run_len(map: &LocalCostmap, c: Cell, dx: i64, dy: i64, limit: usize) -> usize {
    let mut n = 0;
    let (mut x, mut y) = (c.0 as i64, c.1 as i64);
    while n < limit && x >= 0 && y >= 0 && (x as usize) < map.width && (y as usize) < map.width && map.get((x as usize, y as usize)) == MapCell::Occupied {
        n += 1;
        x += dx;
        y += dy;
    }
    n
}

/// Outer L-vertices matching the template, in cell order.
pub fn find_corners(map: &LocalCostmap, t: &CornerTemplate) -> Vec<Cell> {
    let occ = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < map.width && (y as usize) < map.width && map.get((x as usize, y as usize)) == MapCell::Occupied;
    map.cells()
        .filter(|(c, v)| {
            let (x, y) = (c.0 as i64, c.1 as i64);
            *v == MapCell::Occupied
                && !occ(x - t.sx, y)
                && !occ(x, y - t.sy)
                && run_len(map, *c, t.sx, 0, t.min_run) >= t.min_run
                && run_len(map, *c, 0, t.sy, t.min_run) >= t.min_run
        })
        .map(|(c, _)| c)
        .collect()
}

/// Snaps a prior dock pose to the nearest matching corner.
pub fn align_to_corner(map: &LocalCostmap, prior: &Pose2, t: &CornerTemplate) -> Result<Pose2, MaplessError> {
    let expected = prior.position() - t.dock_offset;
    let best = find_corners(map, t)
        .into_iter()
        .map(|c| ((map.center(c) - expected).norm(), c))
        .filter(|(d, _)| *d <= t.search_radius)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or(MaplessError::NoCorner)?;
    let p = map.center(best.1) + t.dock_offset;
    Ok(Pose2::new(p.x, p.y, t.dock_heading))
}
