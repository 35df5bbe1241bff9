//! Run-time state shared by every leaf of a task tree, and the tick loop.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::blackboard::Blackboard;
use super::bt::{BtError, Clock};
use super::grasping::GraspPlan;
use super::report::{Rubric, TraceEvent};
use crate::geom::{Pose2, P3};
use crate::noise::combine;
use crate::object_cloud::{Observation, ObjectCloud};
use crate::occupancy::{OccupancyOctree, OctreeConfig};
use crate::planner::navigation::NavConfig;
use crate::sim::sensors::{camera_detect, lidar_scan, CameraKind};
use crate::sim::{Command, SimEvent, World, DEFAULT_DT};
use crate::tracking::PersonTrack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    Garbage,
    Groceries,
    Drinks,
    Luggage,
    Restaurant,
    CleanTable,
    Breakfast,
}

impl Task {
    pub const ALL: [Task; 7] =
        [Task::Garbage, Task::Groceries, Task::Drinks, Task::Luggage, Task::Restaurant, Task::CleanTable, Task::Breakfast];

    pub fn name(self) -> &'static str {
        match self {
            Task::Garbage => "garbage",
            Task::Groceries => "groceries",
            Task::Drinks => "drinks",
            Task::Luggage => "luggage",
            Task::Restaurant => "restaurant",
            Task::CleanTable => "clean_table",
            Task::Breakfast => "breakfast",
        }
    }

    /// Simulated seconds allowed when the config does not override it.
    pub fn default_limit(self) -> f64 {
        match self {
            Task::Garbage | Task::Groceries => 300.0,
            _ => 600.0,
        }
    }

    pub fn names() -> Vec<&'static str> {
        Task::ALL.iter().map(|t| t.name()).collect()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| TaskError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("arena lacks required {0}")]
    MissingEntity(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Tree(#[from] BtError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub dt: f64,
    /// Overrides the task's default time limit.
    pub limit: Option<f64>,
    pub deterministic_race: bool,
    pub simple_top_grasp: bool,
    /// Carries the garbage bag below the scanner plane.
    pub carry_bag_low: bool,
    pub base_points: f64,
    pub bonus_points: f64,
    pub nav: NavConfig,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            limit: None,
            deterministic_race: false,
            simple_top_grasp: false,
            carry_bag_low: false,
            base_points: 1.0,
            bonus_points: 1.0,
            nav: NavConfig::default(),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(TaskError::BadConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(l) = self.limit {
            if !(l > 0.0 && l.is_finite()) {
                return Err(TaskError::BadConfig(format!("time limit must be positive, got {l}")));
            }
        }
        Ok(())
    }

    pub fn rubric(&self, task: Task) -> Rubric {
        let (b, x) = (self.base_points, self.bonus_points);
        match task {
            Task::Garbage => Rubric::new(&[("bag_deposited", b), ("lid_removed", x)]),
            Task::Groceries => Rubric::new(&[("object_placed", b)]),
            Task::Drinks => Rubric::new(&[("drink_delivered", b), ("unavailable_reported", x)]),
            Task::Luggage => Rubric::new(&[("luggage_delivered", b)]),
            Task::Restaurant => Rubric::new(&[("order_taken", b), ("order_delivered", b)]),
            Task::CleanTable => Rubric::new(&[("object_placed", b)]),
            Task::Breakfast => Rubric::new(&[("bowl_placed", b), ("cereal_grasped", b)]),
        }
    }
}

/// Map voxel size for the run's occupancy octree.
pub const MAP_RESOLUTION: f64 = 0.05;
const MAP_EVERY_TICKS: u64 = 10;
const PERCEIVE_EVERY_TICKS: u64 = 5;
const MAP_RANGE: f64 = 6.0;

pub struct TaskContext {
    pub world: World,
    pub bb: Blackboard,
    pub cfg: TaskConfig,
    pub seed: u64,
    pub events: Vec<TraceEvent>,
    /// Command for the current tick. A later leaf in the same tick replaces
    /// it (a timed-out child's command is superseded by its fallback).
    pub pending: Option<Command>,
    /// Simulator events raised by the last step.
    pub sim_events: Vec<SimEvent>,
    /// Head-camera object memory, refreshed while `perceive` is set.
    pub cloud: ObjectCloud,
    pub perceive: bool,
    /// Lidar map of the run.
    pub map: OccupancyOctree,
    pub rng: ChaCha8Rng,
    /// Plan of the grasp being executed.
    pub grasp: Option<GraspPlan>,
    /// Followed person, when a task tracks one.
    pub track: Option<PersonTrack>,
    pub ticks: u64,
    race_requests: u64,
}

impl Clock for TaskContext {
    fn now(&self) -> f64 {
        self.world.clock
    }
}

impl TaskContext {
    pub fn new(world: World, cfg: TaskConfig, seed: u64) -> Self {
        let h = MAP_RESOLUTION / 2.0;
        let map = OccupancyOctree::covering(
            P3::new(0.0, 0.0, -h),
            P3::new(world.width, world.height, 2.0),
            OctreeConfig { resolution: MAP_RESOLUTION, ..OctreeConfig::default() },
        );
        Self {
            world,
            bb: Blackboard::new(),
            cfg,
            seed,
            events: Vec::new(),
            pending: None,
            sim_events: Vec::new(),
            cloud: ObjectCloud::new(0.1),
            perceive: false,
            map,
            rng: ChaCha8Rng::seed_from_u64(combine(&[seed, 0x7A5C])),
            grasp: None,
            track: None,
            ticks: 0,
            race_requests: 0,
        }
    }

    pub fn log(&mut self, name: &str, fields: &[(&str, String)]) {
        self.events.push(TraceEvent::new(self.world.clock, name, fields));
    }

    pub fn command(&mut self, cmd: Command) {
        self.pending = Some(cmd);
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    pub fn pose(&self) -> Pose2 {
        self.world.robot.base_pose
    }

    /// Navigation settings with arena overrides applied.
    pub fn nav(&self) -> NavConfig {
        let mut n = self.cfg.nav;
        if let Some(v) = self.world.param_f64("nav_speed") {
            n.speed = v;
        }
        n
    }

    pub fn param_or(&self, key: &str, default: f64) -> f64 {
        self.world.param_f64(key).unwrap_or(default)
    }

    pub fn next_race_id(&mut self) -> u64 {
        self.race_requests += 1;
        self.race_requests
    }

    /// Folds the current lidar sweep into the map.
    pub fn map_scan(&mut self) {
        let scan = lidar_scan(&self.world);
        let z = self.world.config.scanner_height;
        let o = scan.origin.position();
        let ends: Vec<P3> = (0..scan.len())
            .map(|i| {
                let r = scan.ranges[i].min(MAP_RANGE);
                let th = scan.origin.theta + scan.angles[i];
                P3::new(o.x + r * th.cos(), o.y + r * th.sin(), z)
            })
            .collect();
        let origin = P3::new(o.x, o.y, z);
        // Same fusion rule as a full sweep, except beams without a return
        // within range only clear space.
        let mut hits = BTreeSet::new();
        let mut misses = BTreeSet::new();
        for (i, e) in ends.iter().enumerate() {
            misses.extend(self.map.traverse(&origin, e));
            if scan.is_hit(i) && scan.ranges[i] <= MAP_RANGE {
                if let Ok(k) = self.map.key_of(e) {
                    hits.insert(k);
                }
            }
        }
        for k in misses.difference(&hits) {
            let _ = self.map.update_voxel(*k, false);
        }
        for k in &hits {
            let _ = self.map.update_voxel(*k, true);
        }
    }

    /// Feeds head-camera detections into the object memory.
    pub fn perceive_objects(&mut self) {
        let obs: Vec<Observation> = camera_detect(&self.world, CameraKind::Head).iter().map(Observation::from).collect();
        self.cloud.apply_batch(&obs, self.world.clock);
    }

    /// Applies the pending command for one step.
    pub fn advance(&mut self) {
        let cmd = self.pending.take().unwrap_or_default();
        let (next, events) = self.world.step(self.cfg.dt, &cmd);
        self.world = next;
        for e in &events {
            if let SimEvent::DoorOpened(name) = e {
                self.log("door_opened", &[("door", name.clone())]);
            }
        }
        self.sim_events = events;
        self.ticks += 1;
        if self.ticks % MAP_EVERY_TICKS == 0 {
            self.map_scan();
        }
        if self.perceive && self.ticks % PERCEIVE_EVERY_TICKS == 0 {
            self.perceive_objects();
        }
    }
}

pub fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

pub fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}
