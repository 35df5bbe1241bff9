//! Take out the garbage: for each can, enter, servo over it, set the lid
//! aside, lift the bag out, carry it to the collection zone and shake it off.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;

use super::facing_pose;
use crate::executive::blackboard::Value;
use crate::executive::bt::Node;
use crate::executive::context::{fmt2, TaskError};
use crate::executive::skills::*;
use crate::geom::{Pose2, P2};
use crate::sim::kinematics::{hand_down_reach, lift_for_hand_down, ArmJoints};
use crate::sim::ObjectId;

/// Tool height while looking down into a can.
const HOVER_TCP: f64 = 0.8;
/// Carried bag bottom, clear of the scanner plane.
const CARRY_BOTTOM: f64 = 0.45;
const CARRY_BOTTOM_LOW: f64 = 0.05;
const DROP_BOTTOM: f64 = 0.05;
const CLEARANCE: f64 = 0.02;

fn hand_down_at(z: f64) -> ArmFn {
    arm_fn(move |_| lift_for_hand_down(z).map(ArmJoints::hand_down))
}

/// Moves the held object's bottom to `bottom` with the hand pointing down.
fn hold_bottom_at(bottom: f64) -> ArmFn {
    arm_fn(move |ctx| {
        let tcp = ctx.world.robot.tcp_world().z;
        let z = tcp + bottom - ctx.world.robot.carry_height;
        lift_for_hand_down(z).map(ArmJoints::hand_down)
    })
}

fn target_is(class: &'static str) -> impl Fn(&Ctx) -> bool {
    move |ctx| ctx.bb.get_text("servo_target").is_ok_and(|t| t == class)
}

fn top_of(ctx: &Ctx, class: &str) -> Option<f64> {
    let tcp = ctx.world.robot.tcp_world();
    ctx.world
        .objects
        .iter()
        .filter(|o| o.class_label == class && o.aabb.footprint().inflate(0.1).contains(&P2::new(tcp.x, tcp.y)))
        .map(|o| o.aabb.max.z)
        .next()
}

/// Lid removal: grasp the lid, swing it aside, set it on the floor and turn back.
fn remove_lid(can: &str) -> Node<Ctx> {
    let can_l = can.to_string();
    Node::sequence(
        "remove_lid",
        vec![
            Node::condition("lid_on", target_is("lid")),
            compute("note_heading", |ctx| {
                let th = ctx.pose().theta;
                ctx.bb.set("can_heading", Value::Float(th));
                true
            }),
            // Known lid thickness is small; go to its mid-height.
            arm_to("lower_to_lid", arm_fn(|ctx| {
                let top = top_of(ctx, "lid")?;
                lift_for_hand_down(top - 0.015).map(ArmJoints::hand_down)
            })),
            grip("grasp_lid", true),
            arm_to("raise_lid", hand_down_at(HOVER_TCP)),
            turn_to("swing_lid", |ctx| ctx.bb.get_f64("can_heading").ok().map(|h| h + FRAC_PI_2)),
            arm_to("lower_lid", hand_down_at(0.2)),
            grip("drop_lid", false),
            arm_to("raise_empty", hand_down_at(HOVER_TCP)),
            turn_to("face_can", |ctx| ctx.bb.get_f64("can_heading").ok()),
            emit("lid_removed", move |_| vec![("can", can_l.clone())]),
        ],
    )
}

fn can_sequence(can: &str, goal: Pose2, deposit: Pose2, low: bool) -> Node<Ctx> {
    let c = can.to_string();
    let c1 = c.clone();
    let c2 = c.clone();
    let c3 = c.clone();
    let carry = if low { CARRY_BOTTOM_LOW } else { CARRY_BOTTOM };
    Node::sequence(
        &format!("can_{can}"),
        vec![
            arm_to("ready_arm", hand_down_at(HOVER_TCP)),
            goto(&format!("to_{can}"), pose_fn(move |_| Some(goal))),
            emit("nav_to_can", move |_| vec![("can", c.clone())]),
            servo("servo_can", vec!["lid".into(), "bag".into()], 5.0, 0.5, 200),
            Node::selector("lid", vec![Node::condition("no_lid", |ctx: &Ctx| !target_is("lid")(ctx)), remove_lid(can)]),
            Node::selector(
                "bag_in_view",
                vec![
                    Node::condition("bag_targeted", target_is("bag")),
                    servo("servo_bag", vec!["bag".into()], 5.0, 0.5, 200),
                ],
            ),
            arm_to("lower_to_bag", arm_fn(|ctx| {
                let top = top_of(ctx, "bag")?;
                lift_for_hand_down(top - CLEARANCE).map(ArmJoints::hand_down)
            })),
            grip("grasp_bag", true),
            compute("note_bag", |ctx| {
                let Some(ObjectId(id)) = ctx.world.robot.held_object else { return false };
                ctx.bb.set("held_id", Value::Int(id as i64));
                true
            }),
            emit("bag_grasped", move |_| vec![("can", c1.clone())]),
            arm_to("lift_bag", hold_bottom_at(CARRY_BOTTOM)),
            emit("bag_lifted", |ctx| vec![("bottom", fmt2(ctx.world.robot.carry_height))]),
            arm_to("carry_height", hold_bottom_at(carry)),
            emit("carry_set", |ctx| vec![("bottom", fmt2(ctx.world.robot.carry_height))]),
            goto("to_zone", pose_fn(move |_| Some(deposit))),
            emit("nav_to_zone", move |_| vec![("can", c2.clone())]),
            arm_to("lower_bag", hold_bottom_at(DROP_BOTTOM)),
            release_with_roll("release_bag", 0.5),
            compute("check_deposit", move |ctx| {
                let inside = ctx
                    .bb
                    .get_int("held_id")
                    .ok()
                    .and_then(|id| ctx.world.object(ObjectId(id as u32)))
                    .is_some_and(|o| {
                        let c = o.aabb.center();
                        ctx.world.zones.get("collection").is_some_and(|z| z.contains(&P2::new(c.x, c.y)))
                    });
                let name = if inside { "bag_deposited" } else { "bag_misplaced" };
                ctx.log(name, &[("can", c3.clone()), ("in_zone", inside.to_string())]);
                inside
            }),
            arm_to("clear_bag", hand_down_at(HOVER_TCP)),
        ],
    )
}

pub fn build(ctx: &mut Ctx) -> Result<Node<Ctx>, TaskError> {
    let world = &ctx.world;
    let start = ctx.pose().position();
    let reach = hand_down_reach();
    let drift = ctx.param_or("drift", 0.05).clamp(0.0, 0.06);
    let cans: Vec<(String, P2)> =
        world.zones.iter().filter(|(k, _)| k.starts_with("can_")).map(|(k, z)| (k.clone(), P2::new(z.x, z.y))).collect();
    let zone = world.zones.get("collection").copied().ok_or_else(|| TaskError::MissingEntity("zone `collection`".into()))?;
    let zc = P2::new(zone.x, zone.y);

    // Deposit spots spread across the zone, one per can, side by side as
    // seen from the approach direction.
    let zpose = match world.param_f64("deposit_heading") {
        Some(h) => Pose2::new(zc.x - reach * h.cos(), zc.y - reach * h.sin(), h),
        None => facing_pose(world, zc, reach, start, 0.02)
            .ok_or_else(|| TaskError::BadConfig("no base pose reaches the collection zone".into()))?,
    };
    let n = cans.len();
    let spread = (zone.r * 0.5).min(0.4);
    let (s, c) = zpose.theta.sin_cos();
    let deposits: Vec<Pose2> = (0..n)
        .map(|k| {
            let off = if n > 1 { spread - 2.0 * spread * k as f64 / (n - 1) as f64 } else { 0.0 };
            Pose2::new(zpose.x - off * s, zpose.y + off * c, zpose.theta)
        })
        .collect();
    if let Some(k) = deposits.iter().position(|p| world.footprint_blocked(&p.position(), world.config.robot_radius)) {
        return Err(TaskError::BadConfig(format!("deposit pose {k} is blocked")));
    }

    let mut seq = vec![Node::wait_until("door_open", |ctx: &Ctx| ctx.world.doors.iter().all(|d| d.is_open(ctx.world.clock)))];
    let mut from = start;
    let mut plans = Vec::with_capacity(n);
    for (name, c) in &cans {
        let pose = facing_pose(world, *c, reach, from, 0.02)
            .ok_or_else(|| TaskError::BadConfig(format!("no base pose reaches {name}")))?;
        from = pose.position();
        plans.push((name.clone(), pose));
    }
    for (k, (name, nominal)) in plans.into_iter().enumerate() {
        // Odometry drift shows up as an offset of the reached pose: sideways
        // or backward, never into the can.
        let side: f64 = ctx.rng.random_range(-drift..=drift);
        let back: f64 = ctx.rng.random_range(0.0..=drift);
        let (s, c) = nominal.theta.sin_cos();
        let goal = Pose2::new(nominal.x - back * c - side * s, nominal.y - back * s + side * c, nominal.theta);
        seq.push(can_sequence(&name, goal, deposits[k], ctx.cfg.carry_bag_low));
    }
    Ok(Node::sequence("garbage", seq))
}
