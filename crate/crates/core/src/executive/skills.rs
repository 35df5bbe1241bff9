//! Reusable leaves: logging, base motion, arm motion, gripper, servoing.

use std::rc::Rc;

use super::bt::{Node, Status};
use super::context::{fmt2, TaskContext};
use crate::geom::{wrap_angle, Pose2, P2, V2};
use crate::manipulation::{servo_step, ServoConfig, ServoOutput};
use crate::planner::navigation::{plan_route, FollowStatus, WaypointFollower};
use crate::sim::kinematics::{ArmJoints, JOINT_LIMITS};
use crate::sim::sensors::{camera_detect, camera_pose, CameraKind};
use crate::sim::{Command, GripperCommand};

pub type Ctx = TaskContext;
pub type PoseFn = Rc<dyn Fn(&Ctx) -> Option<Pose2>>;
pub type ArmFn = Rc<dyn Fn(&Ctx) -> Option<ArmJoints>>;
pub type Fields = Vec<(&'static str, String)>;

pub fn pose_fn(f: impl Fn(&Ctx) -> Option<Pose2> + 'static) -> PoseFn {
    Rc::new(f)
}

pub fn arm_fn(f: impl Fn(&Ctx) -> Option<ArmJoints> + 'static) -> ArmFn {
    Rc::new(f)
}

/// Instantaneous leaf that appends one trace event.
pub fn emit(name: &str, fields: impl Fn(&Ctx) -> Fields + 'static) -> Node<Ctx> {
    let fields = Rc::new(fields);
    let event = name.to_string();
    Node::leaf(name, move || {
        let fields = fields.clone();
        let event = event.clone();
        Box::new(move |ctx: &mut Ctx| {
            let f = fields(ctx);
            ctx.log(&event, &f);
            Status::Success
        })
    })
}

/// Instantaneous leaf running arbitrary bookkeeping; its result decides the status.
pub fn compute(name: &str, f: impl Fn(&mut Ctx) -> bool + 'static) -> Node<Ctx> {
    let f = Rc::new(f);
    Node::leaf(name, move || {
        let f = f.clone();
        Box::new(move |ctx: &mut Ctx| if f(ctx) { Status::Success } else { Status::Failure })
    })
}

/// Plans a route to the target pose and follows it.
pub fn goto(label: &str, target: PoseFn) -> Node<Ctx> {
    let label = label.to_string();
    Node::leaf(&label.clone(), move || {
        let target = target.clone();
        let label = label.clone();
        let mut follower: Option<WaypointFollower> = None;
        Box::new(move |ctx: &mut Ctx| {
            if follower.is_none() {
                let Some(goal) = target(ctx) else {
                    ctx.log("nav_failed", &[("leg", label.clone()), ("reason", "no_goal".into())]);
                    return Status::Failure;
                };
                let nav = ctx.nav();
                match plan_route(&ctx.world, &ctx.pose().position(), &goal.position(), &nav) {
                    Ok(mut wps) => {
                        if let Some(last) = wps.last_mut() {
                            last.heading = Some(goal.theta);
                        }
                        follower = Some(WaypointFollower::new(wps, nav));
                    }
                    Err(e) => {
                        ctx.log("nav_failed", &[("leg", label.clone()), ("reason", e.to_string())]);
                        return Status::Failure;
                    }
                }
            }
            let f = follower.as_mut().expect("set above");
            match f.tick(&ctx.world, ctx.dt()) {
                FollowStatus::Running(cmd) => {
                    ctx.command(cmd);
                    Status::Running
                }
                FollowStatus::Arrived => Status::Success,
                FollowStatus::Failed(e) => {
                    ctx.log("nav_failed", &[("leg", label.clone()), ("reason", e.to_string())]);
                    Status::Failure
                }
            }
        })
    })
}

/// Rotates in place to an absolute heading.
pub fn turn_to(label: &str, heading: impl Fn(&Ctx) -> Option<f64> + 'static) -> Node<Ctx> {
    let heading = Rc::new(heading);
    Node::leaf(label, move || {
        let heading = heading.clone();
        Box::new(move |ctx: &mut Ctx| {
            let Some(h) = heading(ctx) else { return Status::Failure };
            let err = wrap_angle(h - ctx.pose().theta);
            if err.abs() <= 1e-9 {
                return Status::Success;
            }
            let w = ctx.world.config.max_angular;
            ctx.command(Command::base(0.0, 0.0, (err / ctx.dt()).clamp(-w, w)));
            Status::Running
        })
    })
}

const NUDGE_SPEED: f64 = 0.3;

/// Straight holonomic move by an offset in the robot frame at start. No
/// obstacle checks: only for short moves next to furniture.
pub fn move_base(label: &str, dx: f64, dy: f64) -> Node<Ctx> {
    Node::leaf(label, move || {
        let mut goal: Option<P2> = None;
        Box::new(move |ctx: &mut Ctx| {
            let pose = ctx.pose();
            let g = *goal.get_or_insert_with(|| pose.transform(P2::new(dx, dy)));
            let d = g - pose.position();
            let rem = d.norm();
            if rem <= 1e-6 {
                return Status::Success;
            }
            let (s, c) = pose.theta.sin_cos();
            let local = V2::new(c * d.x + s * d.y, -s * d.x + c * d.y);
            let v = local / rem * NUDGE_SPEED.min(rem / ctx.dt());
            ctx.command(Command::base(v.x, v.y, 0.0));
            Status::Running
        })
    })
}

pub fn wait(label: &str, seconds: f64) -> Node<Ctx> {
    Node::leaf(label, move || {
        let mut until: Option<f64> = None;
        Box::new(move |ctx: &mut Ctx| {
            let now = ctx.world.clock;
            let end = *until.get_or_insert(now + seconds);
            if now + 1e-9 >= end {
                Status::Success
            } else {
                Status::Running
            }
        })
    })
}

/// Joint velocities that reach `target` as fast as the limits allow, or
/// `None` once there.
pub fn arm_velocity(ctx: &Ctx, target: &ArmJoints) -> Option<[f64; 5]> {
    let cur = ctx.world.robot.arm;
    let cfg = &ctx.world.config;
    let target = target.clamped();
    if cur.0.iter().zip(target.0).all(|(a, b)| (a - b).abs() <= 1e-9) {
        return None;
    }
    let mut v = [0.0; 5];
    for i in 0..5 {
        let vmax = if i == 0 { cfg.max_lift_speed } else { cfg.max_joint_speed };
        v[i] = ((target.0[i] - cur.0[i]) / ctx.dt()).clamp(-vmax, vmax);
    }
    Some(v)
}

pub fn arm_to(label: &str, target: ArmFn) -> Node<Ctx> {
    let label_s = label.to_string();
    Node::leaf(label, move || {
        let target = target.clone();
        let label = label_s.clone();
        let mut goal: Option<ArmJoints> = None;
        Box::new(move |ctx: &mut Ctx| {
            if goal.is_none() {
                match target(ctx) {
                    Some(g) => goal = Some(g),
                    None => {
                        ctx.log("arm_unreachable", &[("motion", label.clone())]);
                        return Status::Failure;
                    }
                }
            }
            match arm_velocity(ctx, goal.as_ref().expect("set above")) {
                None => Status::Success,
                Some(v) => {
                    ctx.command(Command { joints: v, ..Default::default() });
                    Status::Running
                }
            }
        })
    })
}

/// Current joints with the lift replaced.
pub fn with_lift(ctx: &Ctx, lift: f64) -> ArmJoints {
    let mut j = ctx.world.robot.arm;
    j.0[0] = lift.clamp(JOINT_LIMITS[0].0, JOINT_LIMITS[0].1);
    j
}

/// Closes or opens the gripper; closing fails when nothing was caught.
pub fn grip(label: &str, close: bool) -> Node<Ctx> {
    Node::leaf(label, move || {
        let mut sent = false;
        Box::new(move |ctx: &mut Ctx| {
            if !sent {
                sent = true;
                let g = if close { GripperCommand::Close } else { GripperCommand::Open };
                ctx.command(Command { gripper: Some(g), ..Default::default() });
                return Status::Running;
            }
            let held = ctx.world.robot.held_object.is_some();
            if close && !held {
                ctx.log("grasp_missed", &[]);
            }
            if held == close {
                Status::Success
            } else {
                Status::Failure
            }
        })
    })
}

/// Opens the gripper; if the object sticks, rolls the wrist one way then
/// the other until it drops. Logs the roll when it was needed.
pub fn release_with_roll(label: &str, amplitude: f64) -> Node<Ctx> {
    Node::leaf(label, move || {
        let mut phase = 0u8;
        let mut start = 0.0;
        Box::new(move |ctx: &mut Ctx| {
            if ctx.world.robot.held_object.is_none() {
                if phase >= 2 {
                    ctx.log("wrist_roll", &[("amplitude", fmt2(amplitude))]);
                }
                return if phase == 0 { Status::Failure } else { Status::Success };
            }
            if phase == 0 {
                phase = 1;
                start = ctx.world.robot.arm.wrist_roll();
                ctx.command(Command { gripper: Some(GripperCommand::Open), ..Default::default() });
                return Status::Running;
            }
            let roll = ctx.world.robot.arm.wrist_roll();
            let target = if phase <= 2 { start + amplitude } else { start - amplitude };
            if phase <= 2 && (roll - target).abs() <= 1e-9 {
                phase = 3;
            } else if phase == 1 {
                phase = 2;
            }
            let target = if phase <= 2 { start + amplitude } else { start - amplitude };
            if phase == 3 && (roll - target).abs() <= 1e-9 {
                ctx.log("release_failed", &[]);
                return Status::Failure;
            }
            let mut j = ctx.world.robot.arm;
            j.0[4] = target;
            match arm_velocity(ctx, &j) {
                Some(v) => ctx.command(Command { joints: v, ..Default::default() }),
                None => return Status::Failure,
            }
            Status::Running
        })
    })
}

/// Hand-camera servo on the first visible class in `classes`. The image
/// scale comes from the known height of the target; the gain is chosen for
/// loop gain `k`.
pub fn servo(label: &str, classes: Vec<String>, tolerance_px: f64, k: f64, max_steps: u32) -> Node<Ctx> {
    Node::leaf(label, move || {
        let classes = classes.clone();
        let mut steps = 0u32;
        Box::new(move |ctx: &mut Ctx| {
            let dets = camera_detect(&ctx.world, CameraKind::Hand);
            let model = ctx.world.config.hand_camera;
            let (cx, cy) = model.center();
            let Some(det) = classes.iter().find_map(|c| {
                dets.iter()
                    .filter(|d| &d.class_label == c)
                    .min_by(|a, b| {
                        let da = (a.bbox_2d.center().0 - cx).hypot(a.bbox_2d.center().1 - cy);
                        let db = (b.bbox_2d.center().0 - cx).hypot(b.bbox_2d.center().1 - cy);
                        da.total_cmp(&db)
                    })
            }) else {
                ctx.log("servo_lost", &[("steps", steps.to_string())]);
                return Status::Failure;
            };
            let (u, v) = det.bbox_2d.center();
            let err = (u - cx, v - cy);
            let cam_z = camera_pose(&ctx.world, CameraKind::Hand).position.z;
            let depth = (cam_z - (det.center_3d.z + det.extents.z / 2.0)).max(0.05);
            let ppm = model.focal_px() / depth;
            let cfg = ServoConfig { gain: k / (ppm * ctx.dt()), tolerance: tolerance_px, pixels_per_meter: ppm, dt: ctx.dt() };
            match servo_step(err, cfg.gain, cfg.tolerance) {
                ServoOutput::Done => {
                    let class = det.class_label.clone();
                    ctx.bb.set("servo_target", super::blackboard::Value::Text(class.clone()));
                    ctx.log("servo_aligned", &[("target", class), ("steps", steps.to_string())]);
                    Status::Success
                }
                out @ ServoOutput::Move { .. } => {
                    steps += 1;
                    if steps > max_steps {
                        ctx.log("servo_timeout", &[("steps", steps.to_string())]);
                        return Status::Failure;
                    }
                    let b = out.velocity();
                    ctx.command(Command::base(b.vx, b.vy, 0.0));
                    Status::Running
                }
            }
        })
    })
}

/// Points the head; succeeds on the tick after the command.
pub fn look(label: &str, pan: f64, tilt: f64) -> Node<Ctx> {
    Node::leaf(label, move || {
        let mut sent = false;
        Box::new(move |ctx: &mut Ctx| {
            let r = &ctx.world.robot;
            if sent || ((r.head_pan - pan).abs() < 1e-9 && (r.head_tilt - tilt).abs() < 1e-9) {
                return Status::Success;
            }
            sent = true;
            ctx.command(Command { head: Some((pan, tilt)), ..Default::default() });
            Status::Running
        })
    })
}

/// Holds still while head-camera detections accumulate in the object memory.
pub fn observe(label: &str, seconds: f64) -> Node<Ctx> {
    Node::leaf(label, move || {
        let mut until: Option<f64> = None;
        Box::new(move |ctx: &mut Ctx| {
            let now = ctx.world.clock;
            let end = *until.get_or_insert_with(|| {
                ctx.perceive_objects();
                now + seconds
            });
            if now + 1e-9 >= end {
                ctx.perceive = false;
                Status::Success
            } else {
                ctx.perceive = true;
                Status::Running
            }
        })
    })
}
