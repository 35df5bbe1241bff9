//! Grasp planning and the pick/place subtrees.
//!
//! Candidate grasp poses come from the target's box, poses whose swept
//! gripper hits the run's occupancy map are dropped, and the rest race: each
//! worker checks whether the base can stand where the pose needs it and the
//! arm can reach the height. The first worker to finish wins.

use std::f64::consts::PI;
use std::rc::Rc;

use super::blackboard::Value;
use super::bt::{Node, Status};
use super::context::{fmt2, TaskContext};
use super::skills::*;
use crate::geom::{wrap_angle, Aabb, Pose2, P2, P3, V3};
use crate::manipulation::{filter_colliding, filter_orientation, generate_grasp_poses, Face, GraspPose, GripperModel};
use crate::planner::navigation::{plan_route, NavConfig};
use crate::planner::race::{plan_race, CancelToken, PlanRequest, RaceEventKind, RaceMode, DETERMINISTIC_SLOT};
use crate::sim::kinematics::{
    hand_down_reach, hand_forward_reach, lift_for_hand_down, lift_for_hand_forward, tcp_in_base, ArmJoints, JOINT_LIMITS,
};
use crate::sim::sensors::depth_points;
use crate::sim::World;

/// Distance of the standoff pose from the grasp pose along the approach.
pub const STANDOFF: f64 = 0.1;
const FOOT_MARGIN: f64 = 0.02;
const COLLISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Posture {
    HandDown,
    HandForward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPlan {
    pub face: Face,
    /// Base pose at the standoff; equal to `grasp_base` for top grasps.
    pub standoff_base: Pose2,
    pub grasp_base: Pose2,
    pub posture: Posture,
    pub roll: f64,
    pub standoff_lift: f64,
    pub grasp_lift: f64,
    pub upside_down: bool,
}

impl GraspPlan {
    pub fn standoff_joints(&self) -> ArmJoints {
        match self.posture {
            Posture::HandDown => with_roll(ArmJoints::hand_down(self.standoff_lift), self.roll),
            Posture::HandForward => ArmJoints::hand_forward(self.standoff_lift, self.roll),
        }
    }

    pub fn grasp_joints(&self) -> ArmJoints {
        match self.posture {
            Posture::HandDown => with_roll(ArmJoints::hand_down(self.grasp_lift), self.roll),
            Posture::HandForward => ArmJoints::hand_forward(self.grasp_lift, self.roll),
        }
    }
}

fn with_roll(mut j: ArmJoints, roll: f64) -> ArmJoints {
    j.0[4] = roll;
    j.clamped()
}

/// Wrist roll within limits equal to `r` modulo `period`.
fn fit_roll(r: f64, period: f64) -> Option<f64> {
    let (lo, hi) = JOINT_LIMITS[4];
    (-3..=3).map(|k| r + k as f64 * period).filter(|v| *v >= lo && *v <= hi).min_by(|a, b| a.abs().total_cmp(&b.abs()))
}

fn base_ok(world: &World, p: &P2) -> bool {
    p.x > 0.0 && p.y > 0.0 && p.x < world.width && p.y < world.height
        && !world.footprint_blocked(p, world.config.robot_radius + FOOT_MARGIN)
}

/// Base placement and arm posture realizing `pose`, if any.
pub fn plan_grasp_pose(world: &World, start: P2, pose: &GraspPose, nav: &NavConfig, cancel: &CancelToken) -> Option<GraspPlan> {
    let a = pose.approach();
    let up = pose.up();
    let tcp = pose.position;
    let routable = |to: &P2| !cancel.is_cancelled() && plan_route(world, &start, to, nav).is_ok();
    if a.z < -0.99 {
        let grasp_lift = lift_for_hand_down(tcp.z)?;
        let standoff_lift = lift_for_hand_down(tcp.z + STANDOFF)?;
        let reach = hand_down_reach();
        let phi = up.y.atan2(up.x);
        let direct = (tcp.y - start.y).atan2(tcp.x - start.x);
        let mut headings = vec![direct];
        headings.extend((0..4).map(|k| wrap_angle(k as f64 * PI / 2.0)));
        for h in headings {
            let base = Pose2::new(tcp.x - reach * h.cos(), tcp.y - reach * h.sin(), h);
            if !base_ok(world, &base.position()) {
                continue;
            }
            // A parallel gripper seen from above is symmetric under a half turn.
            let Some(roll) = fit_roll(wrap_angle(h - phi), PI) else { continue };
            if !routable(&base.position()) {
                return None;
            }
            return Some(GraspPlan {
                face: pose.face,
                standoff_base: base,
                grasp_base: base,
                posture: Posture::HandDown,
                roll,
                standoff_lift,
                grasp_lift,
                upside_down: false,
            });
        }
        None
    } else if a.z.abs() < 1e-6 {
        let lift = lift_for_hand_forward(tcp.z)?;
        let h = a.y.atan2(a.x);
        let reach = hand_forward_reach();
        let grasp = Pose2::new(tcp.x - reach * a.x, tcp.y - reach * a.y, h);
        let standoff = Pose2::new(grasp.x - STANDOFF * a.x, grasp.y - STANDOFF * a.y, h);
        if !base_ok(world, &grasp.position()) || !base_ok(world, &standoff.position()) {
            return None;
        }
        let side = a.cross(&V3::z());
        let roll = fit_roll(up.dot(&side).atan2(up.z), 2.0 * PI)?;
        if !routable(&standoff.position()) {
            return None;
        }
        Some(GraspPlan {
            face: pose.face,
            standoff_base: standoff,
            grasp_base: grasp,
            posture: Posture::HandForward,
            roll,
            standoff_lift: lift,
            grasp_lift: lift,
            upside_down: up.z < -0.5,
        })
    } else {
        None
    }
}

/// Target of the next grasp, as written to the blackboard.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspTarget {
    pub class: String,
    pub aabb: Aabb,
}

pub fn set_target(ctx: &mut TaskContext, t: &GraspTarget) {
    ctx.bb.set("target_class", Value::Text(t.class.clone()));
    ctx.bb.set("target_min", Value::Point3(t.aabb.min));
    ctx.bb.set("target_max", Value::Point3(t.aabb.max));
}

pub fn get_target(ctx: &TaskContext) -> Option<GraspTarget> {
    Some(GraspTarget {
        class: ctx.bb.get_text("target_class").ok()?,
        aabb: Aabb::new(ctx.bb.get_point3("target_min").ok()?, ctx.bb.get_point3("target_max").ok()?),
    })
}

/// Folds a grid of head-camera depth returns into the run's map.
pub fn map_depth(ctx: &mut TaskContext) {
    let cam = crate::sim::sensors::camera_pose(&ctx.world, crate::sim::sensors::CameraKind::Head);
    let pts = depth_points(&ctx.world, 64, 48);
    ctx.map.integrate_scan(&cam.position, &pts);
}

/// How candidate grasps are filtered before the race.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraspFilter {
    Any,
    /// Hand upside down relative to the world vertical.
    UpsideDown,
}

/// Plans a grasp for the blackboard target by racing the candidates. Stays
/// running for the simulated planning time of the winner in deterministic mode.
pub fn plan_grasp(label: &str, filter: GraspFilter) -> Node<TaskContext> {
    Node::leaf(label, move || {
        let mut wait_ticks: Option<u32> = None;
        Box::new(move |ctx: &mut TaskContext| {
            if let Some(n) = wait_ticks.as_mut() {
                if *n == 0 {
                    return if ctx.grasp.is_some() { Status::Success } else { Status::Failure };
                }
                *n -= 1;
                return Status::Running;
            }
            let Some(target) = get_target(ctx) else { return Status::Failure };
            map_depth(ctx);
            let gripper = GripperModel::default();
            let Ok(mut poses) = generate_grasp_poses(&target.aabb, &gripper, 2) else { return Status::Failure };
            if filter == GraspFilter::UpsideDown {
                poses = poses.iter().filter(|p| p.face != Face::Top).map(GraspPose::flipped).collect();
                poses = filter_orientation(&poses, 0.9);
            }
            let free = filter_colliding(&poses, &gripper, &ctx.map, COLLISION_THRESHOLD, &target.aabb, STANDOFF);
            ctx.log(
                "grasp_candidates",
                &[("class", target.class.clone()), ("generated", poses.len().to_string()), ("collision_free", free.len().to_string())],
            );
            if free.is_empty() {
                ctx.grasp = None;
                return Status::Failure;
            }
            let id = ctx.next_race_id();
            let req = PlanRequest { seed: ctx.seed, ..PlanRequest::new(id, ctx.pose().position(), free) };
            let mode = if ctx.cfg.deterministic_race { RaceMode::Deterministic } else { RaceMode::Concurrent };
            let nav = ctx.nav();
            let world = &ctx.world;
            let outcome = plan_race(&req, &mode, |s: &P2, g: &GraspPose, c: &CancelToken| plan_grasp_pose(world, *s, g, &nav, c));
            let Ok(outcome) = outcome else { return Status::Failure };
            for e in &outcome.events {
                if e.kind != RaceEventKind::Spawned {
                    ctx.log("race_worker", &[("race", id.to_string()), ("worker", e.worker.to_string()), ("status", e.kind.to_string())]);
                }
            }
            ctx.grasp = outcome.winner.as_ref().map(|(_, p)| *p);
            let finish = outcome
                .events
                .iter()
                .filter(|e| e.kind == RaceEventKind::Succeeded)
                .map(|e| e.t)
                .next()
                .unwrap_or(DETERMINISTIC_SLOT * req.goals.len() as f64);
            match outcome.winner {
                Some((w, p)) => ctx.log(
                    "grasp_planned",
                    &[("race", id.to_string()), ("winner", w.to_string()), ("face", format!("{:?}", p.face).to_lowercase())],
                ),
                None => ctx.log("grasp_unreachable", &[("race", id.to_string())]),
            }
            // Simulated planning time only exists in deterministic mode.
            let ticks = if ctx.cfg.deterministic_race { (finish / ctx.dt() - 1e-9).ceil().max(1.0) as u32 } else { 1 };
            wait_ticks = Some(ticks - 1);
            Status::Running
        })
    })
}

fn plan_of(ctx: &TaskContext) -> Option<GraspPlan> {
    ctx.grasp
}

/// Executes the planned grasp: standoff, straight approach, close, lift, back off.
pub fn execute_grasp() -> Node<TaskContext> {
    Node::sequence(
        "execute_grasp",
        vec![
            arm_to("stow_for_travel", arm_fn(|ctx| plan_of(ctx).map(|p| travel_posture(p.standoff_joints())))),
            goto("to_standoff", pose_fn(|ctx| plan_of(ctx).map(|p| p.standoff_base))),
            arm_to("standoff_posture", arm_fn(|ctx| plan_of(ctx).map(|p| p.standoff_joints()))),
            approach(),
            grip("close", true),
            note_held(),
            arm_to("lift", arm_fn(|ctx| Some(with_lift(ctx, ctx.world.robot.arm.lift() + 0.05)))),
            retreat(),
        ],
    )
}

/// Joints with the hand raised for driving.
fn travel_posture(mut j: ArmJoints) -> ArmJoints {
    j.0[0] = JOINT_LIMITS[0].1;
    j
}

fn approach() -> Node<TaskContext> {
    Node::leaf("approach", || {
        let mut inner: Option<Node<TaskContext>> = None;
        Box::new(move |ctx: &mut TaskContext| {
            if inner.is_none() {
                let Some(p) = plan_of(ctx) else { return Status::Failure };
                inner = Some(match p.posture {
                    Posture::HandDown => arm_to("descend", arm_fn(move |_| Some(p.grasp_joints()))),
                    Posture::HandForward => move_base("advance", (p.grasp_base.position() - p.standoff_base.position()).norm(), 0.0),
                });
            }
            inner.as_mut().expect("set above").tick(ctx)
        })
    })
}

fn retreat() -> Node<TaskContext> {
    Node::leaf("retreat", || {
        let mut inner: Option<Node<TaskContext>> = None;
        Box::new(move |ctx: &mut TaskContext| {
            if inner.is_none() {
                let d = match plan_of(ctx) {
                    Some(p) if p.posture == Posture::HandForward => STANDOFF + 0.15,
                    _ => 0.15,
                };
                inner = Some(move_base("back_off", -d, 0.0));
            }
            inner.as_mut().expect("set above").tick(ctx)
        })
    })
}

pub fn note_held() -> Node<TaskContext> {
    compute("note_held", |ctx| {
        let Some(id) = ctx.world.robot.held_object else { return false };
        let class = ctx.world.object(id).map(|o| o.class_label.clone()).unwrap_or_default();
        ctx.bb.set("held_id", Value::Int(id.0 as i64));
        ctx.bb.set("held_class", Value::Text(class));
        true
    })
}

/// Pick without planning: face the object, hand down, and lower until the
/// fingers touch the surface under it.
pub fn simple_top_grasp() -> Node<TaskContext> {
    Node::sequence(
        "simple_top_grasp",
        vec![
            compute("plan_simple", |ctx| {
                let Some(t) = get_target(ctx) else { return false };
                let c = t.aabb.center();
                let start = ctx.pose().position();
                let reach = hand_down_reach();
                let h = (c.y - start.y).atan2(c.x - start.x);
                let cands = std::iter::once(h).chain((0..4).map(|k| wrap_angle(k as f64 * PI / 2.0)));
                let Some(base) = cands
                    .map(|h| Pose2::new(c.x - reach * h.cos(), c.y - reach * h.sin(), h))
                    .find(|b| base_ok(&ctx.world, &b.position()))
                else {
                    return false;
                };
                let Some(lift) = lift_for_hand_down(t.aabb.max.z + STANDOFF) else { return false };
                ctx.grasp = Some(GraspPlan {
                    face: Face::Top,
                    standoff_base: base,
                    grasp_base: base,
                    posture: Posture::HandDown,
                    roll: 0.0,
                    standoff_lift: lift,
                    grasp_lift: lift,
                    upside_down: false,
                });
                ctx.log("grasp_planned", &[("mode", "simple".into()), ("face", "top".into())]);
                true
            }),
            goto("to_object", pose_fn(|ctx| plan_of(ctx).map(|p| p.grasp_base))),
            arm_to("hover", arm_fn(|ctx| plan_of(ctx).map(|p| p.standoff_joints()))),
            descend_to_contact(),
            grip("close", true),
            note_held(),
            arm_to("lift", arm_fn(|ctx| Some(with_lift(ctx, ctx.world.robot.arm.lift() + 0.1)))),
            move_base("back_off", -0.15, 0.0),
        ],
    )
}

/// Lowers the hand until the tool point reaches the first surface below it.
fn descend_to_contact() -> Node<TaskContext> {
    Node::leaf("descend_to_contact", || {
        Box::new(|ctx: &mut TaskContext| {
            let tcp = ctx.world.robot.tcp_world();
            // Fingers straddle objects; only furniture stops them.
            let surface = ctx
                .world
                .solid_boxes()
                .filter(|b| b.contains_xy(tcp.x, tcp.y) && b.max.z <= tcp.z + 1e-9)
                .map(|b| b.max.z)
                .fold(0.0, f64::max);
            let gap = tcp.z - surface - 0.01;
            if gap <= 1e-9 {
                return Status::Success;
            }
            let mut j = ctx.world.robot.arm;
            j.0[0] -= gap;
            match arm_velocity(ctx, &j) {
                Some(v) => {
                    ctx.command(crate::sim::Command { joints: v, ..Default::default() });
                    Status::Running
                }
                // Lift at its lower limit.
                None => Status::Success,
            }
        })
    })
}

/// Where and onto which surface to set the held object down.
pub type SpotFn = Rc<dyn Fn(&TaskContext) -> Option<(P2, f64)>>;

/// Drives to `spot`, lowers the held object onto `surface` and lets go.
pub fn place_at(label: &str, spot: SpotFn) -> Node<TaskContext> {
    Node::sequence(
        label,
        vec![
            compute("plan_place", move |ctx| {
                let Some((p, surface)) = spot(ctx) else { return false };
                let off = ctx.world.robot.grasp_offset;
                let reach = tcp_in_base(&ctx.world.robot.arm).x + off.x;
                let from = ctx.pose().position();
                let Some(base) = super::tasks::facing_pose(&ctx.world, p, reach, from, FOOT_MARGIN) else {
                    ctx.log("place_unreachable", &[("x", fmt2(p.x)), ("y", fmt2(p.y))]);
                    return false;
                };
                ctx.bb.set("place_base", Value::Pose(base));
                ctx.bb.set("place_surface", Value::Float(surface));
                true
            }),
            arm_to("raise_for_travel", arm_fn(|ctx| Some(with_lift(ctx, JOINT_LIMITS[0].1)))),
            goto("to_place", pose_fn(|ctx| ctx.bb.get_pose("place_base").ok())),
            arm_to("lower_object", arm_fn(|ctx| {
                let surface = ctx.bb.get_f64("place_surface").ok()?;
                let delta = surface + 0.02 - ctx.world.robot.carry_height;
                Some(with_lift(ctx, ctx.world.robot.arm.lift() + delta))
            })),
            release_with_roll("release", 0.5),
            arm_to("clear", arm_fn(|ctx| Some(with_lift(ctx, ctx.world.robot.arm.lift() + 0.1)))),
            move_base("back_off", -0.2, 0.0),
        ],
    )
}

/// World position of the tool's object after release, for logging.
pub fn object_center(ctx: &TaskContext) -> Option<P3> {
    let id = ctx.bb.get_int("held_id").ok()?;
    ctx.world.object(crate::sim::ObjectId(id as u32)).map(|o| o.aabb.center())
}
