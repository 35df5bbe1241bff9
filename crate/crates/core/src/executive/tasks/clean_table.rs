//! Clean the table: dishes are handed over one at a time next to the sink,
//! then carried to the dishwasher. The dishwasher's mapped position is off
//! by a localization error, so the dock pose is snapped to the rack corner
//! seen in the local costmap before placing.

use std::rc::Rc;

use rand::Rng;

use crate::executive::blackboard::Value;
use crate::executive::bt::Node;
use crate::executive::context::{fmt3, TaskError};
use crate::executive::grasping::place_at;
use crate::executive::skills::*;
use crate::geom::{Pose2, Rect, P2, V2};
use crate::mapless::{align_to_corner, fuse_local_map, CornerTemplate};
use crate::sim::kinematics::{lift_for_hand_down, ArmJoints};
use crate::sim::sensors::{lidar_scan, projected_obstacles};
use crate::sim::ObjectId;

const CARRY_TCP: f64 = 0.8;
const MAP_WIDTH: usize = 80;
const MAP_RESOLUTION: f64 = 0.05;
/// Dock pose relative to the rack's front-left corner, robot frame.
const DOCK_OFFSET: V2 = V2::new(-0.385, -0.3);
const CORNER_RUN: usize = 3;
const CORNER_SEARCH: f64 = 0.3;
/// Rack slots across the rack width, as fractions of it from the left.
const SLOTS: [f64; 2] = [0.3, 0.7];

fn template() -> CornerTemplate {
    CornerTemplate { sx: 1, sy: -1, min_run: CORNER_RUN, dock_offset: DOCK_OFFSET, dock_heading: 0.0, search_radius: CORNER_SEARCH }
}

/// Believed rack footprint: the mapped one plus the current correction.
fn believed_rack(ctx: &Ctx) -> Option<Rect> {
    let min = ctx.bb.get_point("rack_min").ok()?;
    let max = ctx.bb.get_point("rack_max").ok()?;
    let c = ctx.bb.get_point("rack_correction").map(|p| p.coords).unwrap_or(V2::zeros());
    Some(Rect::new(min + c, max + c))
}

/// Dock facing +x with the rack's front-left corner at the template offset.
fn dock_pose(r: &Rect) -> Pose2 {
    let p = P2::new(r.min.x, r.max.y) + DOCK_OFFSET;
    Pose2::new(p.x, p.y, 0.0)
}

fn slot(r: &Rect, k: usize) -> P2 {
    let f = SLOTS[k % SLOTS.len()];
    P2::new((r.min.x + r.max.x) / 2.0, r.max.y - f * (r.max.y - r.min.y))
}

fn receive(k: usize) -> Node<Ctx> {
    compute("receive_handover", move |ctx| {
        let Some(table) = ctx.world.furniture("table").map(|t| t.aabb) else { return false };
        let dish = ctx
            .world
            .objects
            .iter()
            .filter(|o| o.graspable && (o.aabb.min.z - table.max.z).abs() < 1e-6 && table.footprint().contains(&o.aabb.center().xy()))
            .map(|o| (o.id, o.class_label.clone()))
            .next();
        let Some((id, class)) = dish else {
            ctx.log("nothing_to_clear", &[]);
            return false;
        };
        if !ctx.world.handover(id) {
            return false;
        }
        ctx.bb.set("held_id", Value::Int(id.0 as i64));
        ctx.bb.set("held_class", Value::Text(class.clone()));
        ctx.bb.set("slot", Value::Int(k as i64));
        ctx.log("handover_received", &[("class", class)]);
        true
    })
}

fn align_dock() -> Node<Ctx> {
    compute("align_dock", |ctx| {
        let pose = ctx.pose();
        let Some(rack) = believed_rack(ctx) else { return false };
        let prior = pose.inverse_transform(dock_pose(&rack).position());
        let map = fuse_local_map(&lidar_scan(&ctx.world), &projected_obstacles(&ctx.world, MAP_RESOLUTION / 2.0), MAP_WIDTH, MAP_RESOLUTION);
        let aligned = match align_to_corner(&map, &Pose2::new(prior.x, prior.y, 0.0), &template()) {
            Ok(p) => pose.transform(p.position()),
            Err(e) => {
                ctx.log("align_failed", &[("reason", e.to_string())]);
                return false;
            }
        };
        let shift = aligned - dock_pose(&rack).position();
        let total = ctx.bb.get_point("rack_correction").map(|p| p.coords).unwrap_or(V2::zeros()) + shift;
        ctx.bb.set("rack_correction", Value::Point(P2::from(total)));
        ctx.log("dock_aligned", &[("dx", fmt3(shift.x)), ("dy", fmt3(shift.y))]);
        true
    })
}

fn verify() -> Node<Ctx> {
    compute("verify_rack", |ctx| {
        let (Ok(id), Ok(k)) = (ctx.bb.get_int("held_id"), ctx.bb.get_int("slot")) else { return false };
        let Some(truth) = ctx.world.furniture("dishwasher").map(|d| d.aabb) else { return false };
        let Some(o) = ctx.world.object(ObjectId(id as u32)) else { return false };
        let class = o.class_label.clone();
        let c = o.aabb.center().xy();
        let on_rack = (o.aabb.min.z - truth.max.z).abs() < 0.01 && truth.footprint().contains(&c);
        let err = (c - slot(&truth.footprint(), k as usize)).norm();
        let name = if on_rack { "object_placed" } else { "object_misplaced" };
        ctx.log(name, &[("class", class), ("rack_error", fmt3(err))]);
        on_rack
    })
}

pub fn build(ctx: &mut Ctx) -> Result<Node<Ctx>, TaskError> {
    let sink = ctx.world.zones["sink"];
    let rack = ctx.world.furniture("dishwasher").map(|d| d.aabb).ok_or_else(|| TaskError::MissingEntity("furniture `dishwasher`".into()))?;
    let table = ctx.world.furniture("table").map(|t| t.aabb).ok_or_else(|| TaskError::MissingEntity("furniture `table`".into()))?;
    let dishes = ctx
        .world
        .objects
        .iter()
        .filter(|o| o.graspable && (o.aabb.min.z - table.max.z).abs() < 1e-6 && table.footprint().contains(&o.aabb.center().xy()))
        .count();
    let count = (ctx.param_or("clear_count", dishes as f64) as usize).min(dishes).min(SLOTS.len());

    // Mapped rack position, wrong by a seeded localization error.
    let err = ctx.param_or("prior_error", 0.1).clamp(0.0, CORNER_SEARCH * 0.8);
    let a: f64 = ctx.rng.random_range(0.0..std::f64::consts::TAU);
    let off = V2::new(a.cos(), a.sin()) * err;
    let fp = rack.footprint();
    ctx.bb.set("rack_min", Value::Point(fp.min + off));
    ctx.bb.set("rack_max", Value::Point(fp.max + off));
    ctx.log("rack_prior", &[("dx", fmt3(off.x)), ("dy", fmt3(off.y))]);
    let top = rack.max.z;

    let mut seq = vec![arm_to("carry_pose", arm_fn(|_| lift_for_hand_down(CARRY_TCP).map(ArmJoints::hand_down)))];
    for k in 0..count {
        seq.push(Node::sequence(
            &format!("dish_{k}"),
            vec![
                goto("to_sink", pose_fn(move |ctx| Some(Pose2::new(sink.x, sink.y, ctx.pose().theta)))),
                receive(k),
                goto("to_dishwasher", pose_fn(|ctx| believed_rack(ctx).map(|r| dock_pose(&r)))),
                look("look_at_rack", 0.0, -0.6),
                align_dock(),
                place_at(
                    "place_in_rack",
                    Rc::new(move |ctx: &Ctx| {
                        let r = believed_rack(ctx)?;
                        let k = ctx.bb.get_int("slot").ok()? as usize;
                        Some((slot(&r, k), top))
                    }),
                ),
                verify(),
                look("look_ahead", 0.0, 0.0),
            ],
        ));
    }
    Ok(Node::sequence("clean_table", seq))
}
