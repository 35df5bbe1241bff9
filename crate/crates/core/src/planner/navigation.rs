//! Base navigation on the simulated world: route planning on an inflated
//! raster with door waypoints, and a stop-at-every-waypoint follower.

use thiserror::Error;

use super::astar::{astar_plan, Cell, Grid};
use crate::geom::{wrap_angle, Pose2, Rect, P2, V2};
use crate::sim::sensors::lidar_scan;
use crate::sim::{Command, World};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavConfig {
    pub resolution: f64,
    /// Obstacle inflation radius for planning.
    pub inflation: f64,
    /// Distance of the door waypoints from the door plane.
    pub door_offset: f64,
    pub speed: f64,
    /// Beams within this range in the motion sector stop the base.
    pub stop_distance: f64,
    pub sector_half_angle: f64,
    pub block_timeout: f64,
    pub dwell_ticks: u32,
    /// Legs longer than this first turn the base to face the motion.
    pub face_motion_min: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            inflation: 0.3,
            door_offset: 0.6,
            speed: 0.5,
            stop_distance: 0.6,
            sector_half_angle: 25f64.to_radians(),
            block_timeout: 5.0,
            dwell_ticks: 1,
            face_motion_min: 0.3,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum NavError {
    #[error("no route to ({0:.2}, {1:.2})")]
    NoRoute(f64, f64),
    #[error("waypoint {0} lies inside an obstacle")]
    WaypointBlocked(usize),
    #[error("path blocked near waypoint {0}")]
    Blocked(usize),
    #[error("gave up after {0} ticks")]
    TickLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: P2,
    pub heading: Option<f64>,
}

impl Waypoint {
    pub fn at(x: f64, y: f64) -> Self {
        Self { position: P2::new(x, y), heading: None }
    }

    pub fn pose(p: Pose2) -> Self {
        Self { position: p.position(), heading: Some(p.theta) }
    }
}

/// Occupancy raster of the world's base obstacles inflated by a radius.
#[derive(Debug, Clone)]
pub struct WorldGrid {
    pub grid: Grid,
    pub resolution: f64,
}

impl WorldGrid {
    pub fn build(world: &World, resolution: f64, inflation: f64) -> Self {
        let rects: Vec<Rect> = world
            .solid_boxes()
            .filter(|b| b.min.z < world.config.robot_height)
            .map(|b| b.footprint())
            .collect();
        let w = (world.width / resolution).ceil() as usize;
        let h = (world.height / resolution).ceil() as usize;
        let grid = Grid::from_fn(w, h, |(x, y)| {
            let c = P2::new((x as f64 + 0.5) * resolution, (y as f64 + 0.5) * resolution);
            rects.iter().any(|r| r.distance_to(&c) < inflation)
        });
        Self { grid, resolution }
    }

    pub fn cell_of(&self, p: &P2) -> Option<Cell> {
        let x = (p.x / self.resolution).floor();
        let y = (p.y / self.resolution).floor();
        self.grid.in_bounds(x as i64, y as i64).then_some((x as usize, y as usize))
    }

    pub fn center(&self, c: Cell) -> P2 {
        P2::new((c.0 as f64 + 0.5) * self.resolution, (c.1 as f64 + 0.5) * self.resolution)
    }

    pub fn point_free(&self, p: &P2) -> bool {
        self.cell_of(p).is_some_and(|c| self.grid.is_free(c))
    }

    /// Every sample along the segment lies in a free cell.
    pub fn line_free(&self, a: &P2, b: &P2) -> bool {
        let n = ((b - a).norm() / (self.resolution / 4.0)).ceil().max(1.0) as usize;
        (0..=n).all(|i| self.point_free(&(a + (b - a) * (i as f64 / n as f64))))
    }

    /// Nearest free cell within `max_cells` rings, scanning rings in order.
    pub fn nearest_free(&self, c: Cell, max_cells: usize) -> Option<Cell> {
        if self.grid.is_free(c) {
            return Some(c);
        }
        let (cx, cy) = (c.0 as i64, c.1 as i64);
        for r in 1..=max_cells as i64 {
            let mut best: Option<(i64, Cell)> = None;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs() != r && dy.abs() != r {
                        continue;
                    }
                    let (x, y) = (cx + dx, cy + dy);
                    if self.grid.in_bounds(x, y) && self.grid.is_free((x as usize, y as usize)) {
                        let d = dx * dx + dy * dy;
                        if best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, (x as usize, y as usize)));
                        }
                    }
                }
            }
            if let Some((_, c)) = best {
                return Some(c);
            }
        }
        None
    }

    fn raw_path(&self, from: &P2, to: &P2) -> Option<Vec<P2>> {
        let snap = (0.35 / self.resolution).ceil() as usize;
        let s = self.nearest_free(self.cell_of(from)?, snap)?;
        let g = self.nearest_free(self.cell_of(to)?, snap)?;
        let path = astar_plan(&self.grid, s, g)?;
        Some(path.cells.iter().map(|c| self.center(*c)).collect())
    }

    /// Greedy line-of-sight shortcutting; keeps both endpoints.
    fn simplify(&self, pts: &[P2]) -> Vec<P2> {
        if pts.len() <= 2 {
            return pts.to_vec();
        }
        let mut out = vec![pts[0]];
        let mut i = 0;
        while i < pts.len() - 1 {
            let mut j = pts.len() - 1;
            while j > i + 1 && !self.line_free(&pts[i], &pts[j]) {
                j -= 1;
            }
            out.push(pts[j]);
            i = j;
        }
        out
    }
}

/// Plans a base route. Doors crossed on the way get a waypoint on each side
/// along the door normal, so the robot goes straight through the frame.
pub fn plan_route(world: &World, from: &P2, to: &P2, cfg: &NavConfig) -> Result<Vec<Waypoint>, NavError> {
    let wg = WorldGrid::build(world, cfg.resolution, cfg.inflation);
    let no_route = || NavError::NoRoute(to.x, to.y);
    let raw = wg.raw_path(from, to).ok_or_else(no_route)?;

    // Doors in the order the raw path crosses them.
    let mut crossings: Vec<(P2, P2)> = Vec::new();
    let mut inside: Option<usize> = None;
    for (k, p) in raw.iter().enumerate() {
        let hit = world.doors.iter().position(|d| d.aabb.footprint().inflate(cfg.resolution).contains(p));
        if hit.is_some() && hit != inside {
            let d = &world.doors[hit.expect("checked")];
            let n = d.normal();
            let m = d.midpoint();
            let prev = raw[k.saturating_sub(1)];
            let side = if (prev - m).dot(&n) < 0.0 { -1.0 } else { 1.0 };
            crossings.push((m + n * side * cfg.door_offset, m - n * side * cfg.door_offset));
        }
        inside = hit;
    }

    let mut anchors = vec![*from];
    for (a, b) in &crossings {
        anchors.push(*a);
        anchors.push(*b);
    }
    anchors.push(*to);
    let mut route: Vec<Waypoint> = Vec::new();
    for (leg, pair) in anchors.windows(2).enumerate() {
        let door_leg = leg % 2 == 1;
        let pts = if door_leg {
            vec![pair[0], pair[1]]
        } else {
            let mut p = wg.raw_path(&pair[0], &pair[1]).ok_or_else(no_route)?;
            p[0] = pair[0];
            let last = p.len() - 1;
            p[last] = pair[1];
            wg.simplify(&p)
        };
        route.extend(pts.iter().skip(1).map(|p| Waypoint { position: *p, heading: None }));
    }
    Ok(route)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FollowStatus {
    Running(Command),
    Arrived,
    Failed(NavError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Face,
    Drive,
    Turn,
    Dwell(u32),
}

/// Drives through waypoints holonomically, stopping for `dwell_ticks` at
/// each one. Stops while the scan shows an obstacle ahead and fails once
/// blocked for longer than the timeout.
#[derive(Debug, Clone)]
pub struct WaypointFollower {
    pub waypoints: Vec<Waypoint>,
    pub cfg: NavConfig,
    idx: usize,
    phase: Phase,
    checked: bool,
    blocked_for: f64,
    last_drive_from: Option<P2>,
}

impl WaypointFollower {
    pub fn new(waypoints: Vec<Waypoint>, cfg: NavConfig) -> Self {
        Self { waypoints, cfg, idx: 0, phase: Phase::Face, checked: false, blocked_for: 0.0, last_drive_from: None }
    }

    pub fn current(&self) -> usize {
        self.idx
    }

    fn obstacle_ahead(&self, world: &World, dir_robot: f64, remaining: f64) -> bool {
        let scan = lidar_scan(world);
        let limit = self.cfg.stop_distance.min(remaining + world.config.robot_radius);
        (0..scan.len()).any(|i| {
            scan.is_hit(i) && wrap_angle(scan.angles[i] - dir_robot).abs() <= self.cfg.sector_half_angle && scan.ranges[i] < limit
        })
    }

    pub fn tick(&mut self, world: &World, dt: f64) -> FollowStatus {
        let pose = world.robot.base_pose;
        loop {
            let Some(wp) = self.waypoints.get(self.idx).copied() else {
                return FollowStatus::Arrived;
            };
            if !self.checked {
                if world.footprint_blocked(&wp.position, world.config.robot_radius) {
                    return FollowStatus::Failed(NavError::WaypointBlocked(self.idx));
                }
                self.checked = true;
            }
            let d = wp.position - pose.position();
            let rem = d.norm();
            match self.phase {
                Phase::Face => {
                    if rem < self.cfg.face_motion_min {
                        self.phase = Phase::Drive;
                        continue;
                    }
                    let err = wrap_angle(d.y.atan2(d.x) - pose.theta);
                    if err.abs() <= 1e-9 {
                        self.phase = Phase::Drive;
                        continue;
                    }
                    let wz = (err / dt).clamp(-world.config.max_angular, world.config.max_angular);
                    return FollowStatus::Running(Command::base(0.0, 0.0, wz));
                }
                Phase::Drive => {
                    if rem <= 1e-6 {
                        self.phase = Phase::Turn;
                        self.last_drive_from = None;
                        continue;
                    }
                    let local = V2::new(
                        d.x * pose.theta.cos() + d.y * pose.theta.sin(),
                        -d.x * pose.theta.sin() + d.y * pose.theta.cos(),
                    );
                    let dir = local.y.atan2(local.x);
                    let stalled = self.last_drive_from.is_some_and(|p| (p - pose.position()).norm() < 1e-9);
                    if stalled || self.obstacle_ahead(world, dir, rem) {
                        self.blocked_for += dt;
                        self.last_drive_from = None;
                        if self.blocked_for > self.cfg.block_timeout {
                            return FollowStatus::Failed(NavError::Blocked(self.idx));
                        }
                        return FollowStatus::Running(Command::default());
                    }
                    self.blocked_for = 0.0;
                    self.last_drive_from = Some(pose.position());
                    let v = local / rem * self.cfg.speed.min(rem / dt);
                    return FollowStatus::Running(Command::base(v.x, v.y, 0.0));
                }
                Phase::Turn => {
                    let err = wp.heading.map_or(0.0, |h| wrap_angle(h - pose.theta));
                    if err.abs() <= 1e-9 {
                        self.phase = Phase::Dwell(self.cfg.dwell_ticks);
                        continue;
                    }
                    let wz = (err / dt).clamp(-world.config.max_angular, world.config.max_angular);
                    return FollowStatus::Running(Command::base(0.0, 0.0, wz));
                }
                Phase::Dwell(n) => {
                    if n > 0 {
                        self.phase = Phase::Dwell(n - 1);
                        return FollowStatus::Running(Command::default());
                    }
                    self.idx += 1;
                    self.phase = Phase::Face;
                    self.checked = false;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct FollowResult {
    pub world: World,
    pub commands: Vec<Command>,
    pub elapsed: f64,
    pub outcome: Result<(), NavError>,
}

/// Runs a follower to completion against the simulator.
pub fn follow_waypoints(world: &World, waypoints: &[Waypoint], cfg: &NavConfig, dt: f64, max_ticks: usize) -> FollowResult {
    let mut f = WaypointFollower::new(waypoints.to_vec(), *cfg);
    let mut w = world.clone();
    let mut commands = Vec::new();
    let t0 = w.clock;
    let outcome = loop {
        if commands.len() >= max_ticks {
            break Err(NavError::TickLimit(max_ticks));
        }
        match f.tick(&w, dt) {
            FollowStatus::Running(cmd) => {
                w = w.step(dt, &cmd).0;
                commands.push(cmd);
            }
            FollowStatus::Arrived => break Ok(()),
            FollowStatus::Failed(e) => break Err(e),
        }
    };
    let elapsed = w.clock - t0;
    FollowResult { world: w, commands, elapsed, outcome }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Aabb, P3};
    use crate::sim::{Door, RobotState, StaticBox};

    fn open_world() -> World {
        let mut w = World::empty(10.0, 10.0);
        w.robot = RobotState::at(Pose2::new(2.0, 5.0, 0.0));
        w
    }

    #[test]
    fn two_waypoints_elapsed() {
        let w = open_world();
        let wps = [Waypoint::at(2.0, 5.0), Waypoint::at(4.0, 5.0)];
        let r = follow_waypoints(&w, &wps, &NavConfig::default(), 0.1, 1000);
        assert_eq!(r.outcome, Ok(()));
        assert!((r.elapsed - 4.2).abs() < 1e-9, "elapsed {}", r.elapsed);
        assert!((r.world.robot.base_pose.x - 4.0).abs() < 1e-9);
        // Full stop before the second leg and at the end.
        assert_eq!(r.commands[0], Command::default());
        assert_eq!(*r.commands.last().unwrap(), Command::default());
    }

    #[test]
    fn waypoint_inside_wall_fails() {
        let mut w = open_world();
        w.static_boxes.push(StaticBox { name: "wall".into(), aabb: Aabb::new(P3::new(5.0, 0.0, 0.0), P3::new(5.1, 10.0, 1.0)) });
        let r = follow_waypoints(&w, &[Waypoint::at(5.05, 5.0)], &NavConfig::default(), 0.1, 1000);
        assert_eq!(r.outcome, Err(NavError::WaypointBlocked(0)));
    }

    #[test]
    fn obstacle_on_leg_times_out() {
        let mut w = open_world();
        w.static_boxes.push(StaticBox { name: "box".into(), aabb: Aabb::new(P3::new(3.0, 4.5, 0.0), P3::new(3.5, 5.5, 1.0)) });
        let r = follow_waypoints(&w, &[Waypoint::at(6.0, 5.0)], &NavConfig::default(), 0.1, 1000);
        assert_eq!(r.outcome, Err(NavError::Blocked(0)));
        assert!(r.world.robot.base_pose.x < 3.0 - 0.25);
    }

    #[test]
    fn route_passes_door_straight() {
        let mut w = World::empty(10.0, 6.0);
        w.robot = RobotState::at(Pose2::new(2.0, 1.5, 0.0));
        // Wall across y=3 with a 1 m door at x in [4.5, 5.5].
        w.static_boxes.push(StaticBox { name: "wall_a".into(), aabb: Aabb::new(P3::new(0.0, 2.95, 0.0), P3::new(4.5, 3.05, 2.0)) });
        w.static_boxes.push(StaticBox { name: "wall_b".into(), aabb: Aabb::new(P3::new(5.5, 2.95, 0.0), P3::new(10.0, 3.05, 2.0)) });
        w.doors.push(Door { name: "door".into(), aabb: Aabb::new(P3::new(4.5, 2.95, 0.0), P3::new(5.5, 3.05, 2.0)), open_at: Some(1.0) });
        let cfg = NavConfig::default();
        assert!(plan_route(&w, &P2::new(2.0, 1.5), &P2::new(8.0, 4.5), &cfg).is_err());
        w.clock = 1.0;
        let route = plan_route(&w, &P2::new(2.0, 1.5), &P2::new(8.0, 4.5), &cfg).unwrap();
        let k = route.iter().position(|p| (p.position - P2::new(5.0, 2.4)).norm() < 1e-9).expect("before-door waypoint");
        assert!((route[k + 1].position - P2::new(5.0, 3.6)).norm() < 1e-9);
        assert!((route.last().unwrap().position - P2::new(8.0, 4.5)).norm() < 1e-9);
        let r = follow_waypoints(&w, &route, &cfg, 0.1, 5000);
        assert_eq!(r.outcome, Ok(()));
    }
}
