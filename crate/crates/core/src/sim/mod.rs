//! Deterministic 2.5D arena simulation.
//!
//! The [`World`] is a value: [`World::step`] returns the successor snapshot and
//! leaves the original untouched, so snapshots can be handed to sensors and
//! planners on other threads without synchronisation. All sensors live in
//! [`sensors`] and are pure functions of a snapshot.

pub mod arena;
pub mod kinematics;
pub mod sensors;

use std::collections::BTreeMap;

use crate::geom::{Aabb, Pose2, Rect, P2, P3, V2, V3};
pub use arena::{load_arena, ArenaError};
pub use kinematics::{ArmJoints, JOINT_LIMITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(pub u32);

impl std::fmt::Display for ObjectId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticBox {
    pub name: String,
    pub aabb: Aabb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Door {
    pub name: String,
    pub aabb: Aabb,
    /// Simulated time at which the door opens; `None` means always open.
    pub open_at: Option<f64>,
}

impl Door {
    pub fn is_open(&self, clock: f64) -> bool {
        self.open_at.is_none_or(|t| clock >= t)
    }

    pub fn midpoint(&self) -> P2 {
        self.aabb.footprint().center()
    }

    /// Unit normal of the door plane (perpendicular to its long side).
    pub fn normal(&self) -> V2 {
        let e = self.aabb.extents();
        if e.x >= e.y {
            V2::new(0.0, 1.0)
        } else {
            V2::new(1.0, 0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimObject {
    pub id: ObjectId,
    pub class_label: String,
    pub aabb: Aabb,
    pub category: Option<String>,
    pub graspable: bool,
    /// Sticky objects cling to an opened gripper until the wrist rolls both ways.
    pub sticky: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedWaypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPerson {
    pub id: String,
    pub trajectory: Vec<TimedWaypoint>,
    pub torso_color: [u8; 3],
    pub wave_script: Vec<(f64, f64)>,
    pub has_drink: bool,
}

/// Joint positions of a simulated person.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonJoints {
    pub torso: P3,
    pub shoulder: P3,
    pub wrist: P3,
    pub legs: [P2; 2],
}

pub const WAVE_FREQUENCY_HZ: f64 = 2.0;
pub const WAVE_AMPLITUDE_M: f64 = 0.3;

impl SimPerson {
    pub fn position(&self, t: f64) -> P2 {
        let tr = &self.trajectory;
        match tr.len() {
            0 => P2::origin(),
            _ if t <= tr[0].t => P2::new(tr[0].x, tr[0].y),
            _ => {
                for w in tr.windows(2) {
                    if t <= w[1].t {
                        let a = (t - w[0].t) / (w[1].t - w[0].t);
                        return P2::new(w[0].x + a * (w[1].x - w[0].x), w[0].y + a * (w[1].y - w[0].y));
                    }
                }
                let last = tr[tr.len() - 1];
                P2::new(last.x, last.y)
            }
        }
    }

    /// Direction of travel of the most recent non-degenerate segment.
    pub fn heading(&self, t: f64) -> f64 {
        let mut heading = 0.0;
        for w in self.trajectory.windows(2) {
            if w[0].t > t {
                break;
            }
            let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            if dx.hypot(dy) > 1e-9 {
                heading = dy.atan2(dx);
            }
        }
        heading
    }

    pub fn is_waving(&self, t: f64) -> bool {
        self.wave_script.iter().any(|&(a, b)| t >= a && t <= b)
    }

    pub fn joints(&self, t: f64) -> PersonJoints {
        let p = self.position(t);
        let h = self.heading(t);
        let left = V2::new(-h.sin(), h.cos());
        let right = -left;
        let leg_offset = left * 0.1;
        let shoulder = P3::new(p.x + right.x * 0.2, p.y + right.y * 0.2, 1.45);
        let wrist = if self.is_waving(t) {
            let start = self
                .wave_script
                .iter()
                .find(|&&(a, b)| t >= a && t <= b)
                .map(|w| w.0)
                .unwrap_or(t);
            let s = WAVE_AMPLITUDE_M * (std::f64::consts::TAU * WAVE_FREQUENCY_HZ * (t - start)).sin();
            P3::new(shoulder.x + right.x * s, shoulder.y + right.y * s, shoulder.z + 0.25)
        } else {
            P3::new(shoulder.x, shoulder.y, shoulder.z - 0.55)
        };
        PersonJoints {
            torso: P3::new(p.x, p.y, 1.2),
            shoulder,
            wrist,
            legs: [p + leg_offset, p - leg_offset],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zone {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

impl Zone {
    pub fn contains(&self, p: &P2) -> bool {
        (p - P2::new(self.x, self.y)).norm() <= self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReleaseState {
    pub start_roll: f64,
    pub rolled_positive: bool,
    pub rolled_negative: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub base_pose: Pose2,
    pub arm: ArmJoints,
    pub gripper_open: bool,
    pub held_object: Option<ObjectId>,
    /// Height of the bottom of the carried object, or of the gripper when empty.
    pub carry_height: f64,
    pub head_pan: f64,
    pub head_tilt: f64,
    /// Held object's center relative to the gripper, in the base frame.
    pub grasp_offset: V3,
    pub pending_release: Option<ReleaseState>,
}

impl RobotState {
    pub fn at(pose: Pose2) -> Self {
        let arm = ArmJoints::stowed();
        let tcp = kinematics::tcp_in_base(&arm);
        Self {
            base_pose: pose,
            arm,
            gripper_open: true,
            held_object: None,
            carry_height: tcp.z,
            head_pan: 0.0,
            head_tilt: -0.35,
            grasp_offset: V3::zeros(),
            pending_release: None,
        }
    }

    /// Gripper tool point in world coordinates.
    pub fn tcp_world(&self) -> P3 {
        let local = kinematics::tcp_in_base(&self.arm);
        let xy = self.base_pose.transform(P2::new(local.x, local.y));
        P3::new(xy.x, xy.y, local.z)
    }
}

/// Tunable simulation constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub robot_radius: f64,
    /// Static geometry starting below this height blocks the base.
    pub robot_height: f64,
    pub scanner_height: f64,
    pub scan_fov: f64,
    pub scan_resolution: f64,
    pub scan_max_range: f64,
    pub detection_sigma: f64,
    pub pixel_sigma: f64,
    pub joint_sigma: f64,
    pub head_camera: sensors::CameraModel,
    pub hand_camera: sensors::CameraModel,
    pub leg_radius: f64,
    pub max_linear: f64,
    pub max_angular: f64,
    pub max_lift_speed: f64,
    pub max_joint_speed: f64,
    pub grasp_margin: f64,
    pub roll_release_angle: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            robot_radius: 0.25,
            robot_height: 1.35,
            scanner_height: 0.2,
            scan_fov: 240f64.to_radians(),
            scan_resolution: 0.5f64.to_radians(),
            scan_max_range: 10.0,
            detection_sigma: 0.02,
            pixel_sigma: 2.0,
            joint_sigma: 0.005,
            head_camera: sensors::CameraModel::head(),
            hand_camera: sensors::CameraModel::hand(),
            leg_radius: 0.07,
            max_linear: 1.0,
            max_angular: 1.5,
            max_lift_speed: 0.2,
            max_joint_speed: 1.2,
            grasp_margin: 0.04,
            roll_release_angle: 0.3,
        }
    }
}

pub const DEFAULT_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseVelocity {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

impl BaseVelocity {
    pub const ZERO: BaseVelocity = BaseVelocity { vx: 0.0, vy: 0.0, wz: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GripperCommand {
    Open,
    Close,
}

/// Velocity-level command for one step; base velocity is in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub base: BaseVelocity,
    pub joints: [f64; 5],
    pub gripper: Option<GripperCommand>,
    pub head: Option<(f64, f64)>,
}

impl Default for Command {
    fn default() -> Self {
        Self {
            base: BaseVelocity::ZERO,
            joints: [0.0; 5],
            gripper: None,
            head: None,
        }
    }
}

impl Command {
    pub fn base(vx: f64, vy: f64, wz: f64) -> Self {
        Self {
            base: BaseVelocity { vx, vy, wz },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    Bumper,
    Grasped(ObjectId),
    GraspMissed,
    Released(ObjectId),
    ReleaseStuck(ObjectId),
    DoorOpened(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub width: f64,
    pub height: f64,
    pub static_boxes: Vec<StaticBox>,
    pub doors: Vec<Door>,
    pub objects: Vec<SimObject>,
    pub people: Vec<SimPerson>,
    pub zones: BTreeMap<String, Zone>,
    pub robot: RobotState,
    pub clock: f64,
    pub rng_seed: u64,
    pub menu: Vec<String>,
    /// Scripted utterances per person, consumed in order.
    pub dialogue: BTreeMap<String, Vec<String>>,
    pub params: BTreeMap<String, String>,
    pub config: SimConfig,
}

impl World {
    pub fn empty(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            static_boxes: Vec::new(),
            doors: Vec::new(),
            objects: Vec::new(),
            people: Vec::new(),
            zones: BTreeMap::new(),
            robot: RobotState::at(Pose2::new(width / 2.0, height / 2.0, 0.0)),
            clock: 0.0,
            rng_seed: 0,
            menu: Vec::new(),
            dialogue: BTreeMap::new(),
            params: BTreeMap::new(),
            config: SimConfig::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn object(&self, id: ObjectId) -> Option<&SimObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    fn object_mut(&mut self, id: ObjectId) -> Option<&mut SimObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn person(&self, id: &str) -> Option<&SimPerson> {
        self.people.iter().find(|p| p.id == id)
    }

    pub fn furniture(&self, name: &str) -> Option<&StaticBox> {
        self.static_boxes.iter().find(|b| b.name == name)
    }

    pub fn param_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(|v| v.parse().ok())
    }

    /// Every box that currently blocks motion and sensing: static geometry
    /// plus closed doors.
    pub fn solid_boxes(&self) -> impl Iterator<Item = &Aabb> + '_ {
        self.static_boxes
            .iter()
            .map(|b| &b.aabb)
            .chain(self.doors.iter().filter(|d| !d.is_open(self.clock)).map(|d| &d.aabb))
    }

    fn base_obstacles(&self) -> Vec<Rect> {
        self.solid_boxes()
            .filter(|b| b.min.z < self.config.robot_height)
            .map(|b| b.footprint())
            .collect()
    }

    /// True if a disc footprint centered at `p` overlaps any base obstacle.
    pub fn footprint_blocked(&self, p: &P2, radius: f64) -> bool {
        self.base_obstacles().iter().any(|r| r.distance_to(p) < radius)
    }

    /// Advances the simulation by `dt` seconds under `cmd`.
    ///
    /// Commands are clamped to the configured velocity limits. Base motion
    /// that would intersect static geometry stops at contact and raises
    /// [`SimEvent::Bumper`].
    pub fn step(&self, dt: f64, cmd: &Command) -> (World, Vec<SimEvent>) {
        assert!(dt > 0.0, "dt must be positive");
        let mut next = self.clone();
        let mut events = Vec::new();
        let cfg = &self.config;

        // Base.
        let vx = cmd.base.vx.clamp(-cfg.max_linear, cfg.max_linear);
        let vy = cmd.base.vy.clamp(-cfg.max_linear, cfg.max_linear);
        let wz = cmd.base.wz.clamp(-cfg.max_angular, cfg.max_angular);
        let pose = self.robot.base_pose;
        let (s, c) = pose.theta.sin_cos();
        let disp = V2::new(c * vx - s * vy, s * vx + c * vy) * dt;
        let dist = disp.norm();
        let mut new_pos = pose.position();
        if dist > 0.0 {
            let dir = disp / dist;
            let t_hit = self
                .base_obstacles()
                .iter()
                .filter_map(|r| r.disc_sweep_entry(&pose.position(), &dir, cfg.robot_radius, dist))
                .fold(f64::INFINITY, f64::min);
            if t_hit.is_finite() {
                let travel = (t_hit - 1e-9).max(0.0);
                new_pos += dir * travel;
                events.push(SimEvent::Bumper);
            } else {
                new_pos += disp;
            }
        }
        next.robot.base_pose = Pose2::new(new_pos.x, new_pos.y, crate::geom::wrap_angle(pose.theta + wz * dt));

        // Arm.
        for (i, v) in cmd.joints.iter().enumerate() {
            let vmax = if i == 0 { cfg.max_lift_speed } else { cfg.max_joint_speed };
            let v = v.clamp(-vmax, vmax);
            next.robot.arm.0[i] += v * dt;
        }
        next.robot.arm = next.robot.arm.clamped();
        if let Some((pan, tilt)) = cmd.head {
            next.robot.head_pan = pan.clamp(-3.8, 1.75);
            next.robot.head_tilt = tilt.clamp(-1.57, 0.52);
        }

        next.clock = self.clock + dt;
        for d in &self.doors {
            if !d.is_open(self.clock) && d.is_open(next.clock) {
                events.push(SimEvent::DoorOpened(d.name.clone()));
            }
        }

        // Sticky release: detach once the wrist has rolled both ways.
        if let (Some(id), Some(mut rel)) = (next.robot.held_object, next.robot.pending_release) {
            let d = next.robot.arm.wrist_roll() - rel.start_roll;
            rel.rolled_positive |= d > cfg.roll_release_angle;
            rel.rolled_negative |= d < -cfg.roll_release_angle;
            if rel.rolled_positive && rel.rolled_negative {
                next.drop_held(id);
                events.push(SimEvent::Released(id));
            } else {
                next.robot.pending_release = Some(rel);
            }
        }

        match cmd.gripper {
            Some(GripperCommand::Close) if next.robot.held_object.is_none() => {
                next.robot.gripper_open = false;
                match next.graspable_at_tcp() {
                    Some(id) => {
                        let tcp = next.robot.tcp_world();
                        let center = next.object(id).map(|o| o.aabb.center()).unwrap_or(tcp);
                        let off = center - tcp;
                        let (s, c) = next.robot.base_pose.theta.sin_cos();
                        next.robot.grasp_offset = V3::new(c * off.x + s * off.y, -s * off.x + c * off.y, off.z);
                        next.robot.held_object = Some(id);
                        events.push(SimEvent::Grasped(id));
                    }
                    None => events.push(SimEvent::GraspMissed),
                }
            }
            Some(GripperCommand::Open) => {
                next.robot.gripper_open = true;
                if let Some(id) = next.robot.held_object {
                    let sticky = next.object(id).is_some_and(|o| o.sticky);
                    if !sticky {
                        next.drop_held(id);
                        events.push(SimEvent::Released(id));
                    } else if next.robot.pending_release.is_none() {
                        next.robot.pending_release = Some(ReleaseState {
                            start_roll: next.robot.arm.wrist_roll(),
                            rolled_positive: false,
                            rolled_negative: false,
                        });
                        events.push(SimEvent::ReleaseStuck(id));
                    }
                }
            }
            _ => {}
        }

        next.update_held_pose();
        (next, events)
    }

    fn graspable_at_tcp(&self) -> Option<ObjectId> {
        let tcp = self.robot.tcp_world();
        self.objects
            .iter()
            .filter(|o| o.graspable && o.aabb.inflate(self.config.grasp_margin).contains(&tcp))
            .min_by(|a, b| {
                let da = (a.aabb.center() - tcp).norm();
                let db = (b.aabb.center() - tcp).norm();
                da.total_cmp(&db).then(a.id.cmp(&b.id))
            })
            .map(|o| o.id)
    }

    /// Places a held object into the gripper directly (scripted handover).
    pub fn handover(&mut self, id: ObjectId) -> bool {
        if self.robot.held_object.is_some() || self.object(id).is_none() {
            return false;
        }
        let h = self.object(id).map(|o| o.aabb.extents().z).unwrap_or(0.0);
        self.robot.held_object = Some(id);
        self.robot.gripper_open = false;
        self.robot.grasp_offset = V3::new(0.0, 0.0, -h / 2.0);
        self.update_held_pose();
        true
    }

    /// Passes the held object to a person, who then holds it at chest height.
    pub fn give_to_person(&mut self, person: &str) -> Option<ObjectId> {
        let id = self.robot.held_object?;
        let t = self.clock;
        let p = self.people.iter_mut().find(|p| p.id == person)?;
        let at = p.position(t);
        p.has_drink = true;
        self.robot.held_object = None;
        self.robot.pending_release = None;
        self.robot.gripper_open = true;
        if let Some(o) = self.object_mut(id) {
            let ext = o.aabb.extents();
            o.aabb = Aabb::from_center_extents(P3::new(at.x, at.y, 1.0), ext);
        }
        self.update_held_pose();
        Some(id)
    }

    fn update_held_pose(&mut self) {
        let tcp = self.robot.tcp_world();
        match self.robot.held_object {
            Some(id) => {
                let (s, c) = self.robot.base_pose.theta.sin_cos();
                let o = self.robot.grasp_offset;
                let world_off = V3::new(c * o.x - s * o.y, s * o.x + c * o.y, o.z);
                let mut bottom = 0.0;
                if let Some(obj) = self.object_mut(id) {
                    let ext = obj.aabb.extents();
                    let mut center = tcp + world_off;
                    center.z = center.z.max(ext.z / 2.0);
                    obj.aabb = Aabb::from_center_extents(center, ext);
                    bottom = obj.aabb.min.z;
                }
                self.robot.carry_height = bottom;
            }
            None => self.robot.carry_height = tcp.z,
        }
    }

    fn drop_held(&mut self, id: ObjectId) {
        self.robot.held_object = None;
        self.robot.pending_release = None;
        let Some(obj) = self.object(id).cloned() else { return };
        let c = obj.aabb.center();
        let support = self.support_height(c.x, c.y, obj.aabb.min.z + 1e-6, Some(id));
        let ext = obj.aabb.extents();
        if let Some(o) = self.object_mut(id) {
            o.aabb = Aabb::from_center_extents(P3::new(c.x, c.y, support + ext.z / 2.0), ext);
        }
        self.update_held_pose();
    }

    /// Highest supporting surface under `(x, y)` whose top is at or below `below`.
    pub fn support_height(&self, x: f64, y: f64, below: f64, exclude: Option<ObjectId>) -> f64 {
        let statics = self.solid_boxes().copied();
        let objects = self
            .objects
            .iter()
            .filter(|o| Some(o.id) != exclude && Some(o.id) != self.robot.held_object)
            .map(|o| o.aabb);
        statics
            .chain(objects)
            .filter(|b| b.contains_xy(x, y) && b.max.z <= below)
            .map(|b| b.max.z)
            .fold(0.0, f64::max)
    }

    /// Highest surface under `(x, y)` regardless of height (0 for floor).
    pub fn top_surface(&self, x: f64, y: f64) -> f64 {
        self.support_height(x, y, f64::INFINITY, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_world() -> World {
        let mut w = World::empty(10.0, 10.0);
        w.robot = RobotState::at(Pose2::new(2.0, 5.0, 0.0));
        w
    }

    #[test]
    fn zero_command_only_advances_clock() {
        let w = open_world();
        let (n, ev) = w.step(0.1, &Command::default());
        assert!(ev.is_empty());
        assert_eq!(n.robot.base_pose, w.robot.base_pose);
        assert!((n.clock - 0.1).abs() < 1e-15);
    }

    #[test]
    fn forward_motion_integrates() {
        let w = open_world();
        let (n, _) = w.step(2.0, &Command::base(0.5, 0.0, 0.0));
        assert!((n.robot.base_pose.x - 3.0).abs() < 1e-12);
        assert_eq!(n.robot.base_pose.y, 5.0);
    }

    #[test]
    fn bumper_stops_at_wall_contact() {
        let mut w = open_world();
        w.static_boxes.push(StaticBox {
            name: "wall".into(),
            aabb: Aabb::new(P3::new(3.0, 0.0, 0.0), P3::new(3.1, 10.0, 1.0)),
        });
        let (n, ev) = w.step(1.0, &Command::base(1.0, 0.0, 0.0));
        assert_eq!(ev, vec![SimEvent::Bumper]);
        // Swept disc touches the face at x = 3.0 - radius.
        assert!((n.robot.base_pose.x - 2.75).abs() < 1e-6);
        assert!(n.robot.base_pose.x < 2.75);
        let (n2, ev2) = n.step(0.1, &Command::base(1.0, 0.0, 0.0));
        assert_eq!(ev2, vec![SimEvent::Bumper]);
        assert!((n2.robot.base_pose.x - n.robot.base_pose.x).abs() < 1e-8);
    }

    #[test]
    fn person_wrist_only_moves_while_waving() {
        let p = SimPerson {
            id: "a".into(),
            trajectory: vec![TimedWaypoint { t: 0.0, x: 1.0, y: 1.0 }],
            torso_color: [200, 0, 0],
            wave_script: vec![(1.0, 2.0)],
            has_drink: false,
        };
        assert_eq!(p.joints(0.3).wrist, p.joints(0.4).wrist);
        assert_ne!(p.joints(1.3).wrist, p.joints(1.4).wrist);
    }

    #[test]
    fn sticky_release_needs_bidirectional_roll() {
        let mut w = open_world();
        w.objects.push(SimObject {
            id: ObjectId(0),
            class_label: "bag".into(),
            aabb: Aabb::from_center_extents(P3::new(0.0, 0.0, 0.2), V3::new(0.2, 0.2, 0.3)),
            category: None,
            graspable: true,
            sticky: true,
        });
        assert!(w.handover(ObjectId(0)));
        let open = Command { gripper: Some(GripperCommand::Open), ..Default::default() };
        let (mut w, ev) = w.step(0.1, &open);
        assert_eq!(ev, vec![SimEvent::ReleaseStuck(ObjectId(0))]);
        let roll = |v: f64| Command { joints: [0.0, 0.0, 0.0, 0.0, v], ..Default::default() };
        for _ in 0..4 {
            w = w.step(0.1, &roll(1.2)).0;
        }
        assert_eq!(w.robot.held_object, Some(ObjectId(0)));
        let mut released = false;
        for _ in 0..8 {
            let (n, ev) = w.step(0.1, &roll(-1.2));
            released |= ev.contains(&SimEvent::Released(ObjectId(0)));
            w = n;
        }
        assert!(released);
        assert_eq!(w.robot.held_object, None);
    }
}
