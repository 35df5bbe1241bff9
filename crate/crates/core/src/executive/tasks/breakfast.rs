//! Serve the breakfast, partially: the bowl goes from the counter onto the
//! table near its closest edge, then the cereal is picked with the hand
//! upside down so it could pour. Pouring itself is skipped; there is no way
//! to tell how much has been poured.

use std::rc::Rc;

use super::facing_pose;
use crate::executive::blackboard::Value;
use crate::executive::bt::Node;
use crate::executive::context::{fmt2, fmt3, TaskError};
use crate::executive::grasping::{execute_grasp, object_center, place_at, plan_grasp, set_target, GraspFilter, GraspTarget};
use crate::executive::skills::*;
use crate::geom::{Rect, P2};
use crate::semantics::normalize_label;

const COUNTER_VIEW_DISTANCE: f64 = 1.0;
/// Bowl center this far in from the table edge nearest the robot.
const EDGE_INSET: f64 = 0.15;
const TABLE_VIEW_DISTANCE: f64 = 0.9;

fn counter(ctx: &Ctx) -> Option<Rect> {
    ctx.world.furniture("counter").map(|c| c.aabb.footprint())
}

fn table(ctx: &Ctx) -> Option<(Rect, f64)> {
    ctx.world.furniture("table").map(|t| (t.aabb.footprint(), t.aabb.max.z))
}

fn view_counter(label: &str) -> Node<Ctx> {
    Node::sequence(
        label,
        vec![
            goto("to_counter", pose_fn(|ctx| facing_pose(&ctx.world, counter(ctx)?.center(), COUNTER_VIEW_DISTANCE, ctx.pose().position(), 0.05))),
            look("look_at_counter", 0.0, -0.5),
            observe("observe_counter", 1.0),
        ],
    )
}

/// Targets the remembered object of `class` closest to the counter.
fn target(class: &'static str) -> Node<Ctx> {
    compute(&format!("target_{class}"), move |ctx| {
        let Some(c) = counter(ctx) else { return false };
        let c = c.center();
        let Some(e) = ctx
            .cloud
            .estimates()
            .filter(|e| normalize_label(&e.class_label) == class)
            .min_by(|a, b| (a.centroid.xy() - c).norm().total_cmp(&(b.centroid.xy() - c).norm()))
        else {
            ctx.log("object_not_seen", &[("class", class.into())]);
            return false;
        };
        let t = GraspTarget { class: e.class_label.clone(), aabb: e.aabb };
        let id = e.id;
        ctx.cloud.remove(id);
        set_target(ctx, &t);
        true
    })
}

/// Point on the table `EDGE_INSET` in from the edge facing the robot.
fn edge_spot(ctx: &Ctx) -> Option<(P2, f64)> {
    let (r, top) = table(ctx)?;
    let me = ctx.pose().position();
    let c = r.center();
    let cands = [
        P2::new(r.min.x + EDGE_INSET, c.y),
        P2::new(r.max.x - EDGE_INSET, c.y),
        P2::new(c.x, r.min.y + EDGE_INSET),
        P2::new(c.x, r.max.y - EDGE_INSET),
    ];
    let p = cands.into_iter().min_by(|a, b| (a - me).norm().total_cmp(&(b - me).norm()))?;
    Some((p, top))
}

fn edge_distance(r: &Rect, p: &P2) -> f64 {
    (p.x - r.min.x).min(r.max.x - p.x).min(p.y - r.min.y).min(r.max.y - p.y)
}

fn verify_bowl() -> Node<Ctx> {
    compute("verify_bowl", |ctx| {
        let (Some(c), Some((r, top))) = (object_center(ctx), table(ctx)) else { return false };
        let id = ctx.bb.get_int("held_id").unwrap_or(-1);
        let bottom = ctx.world.object(crate::sim::ObjectId(id as u32)).map(|o| o.aabb.min.z).unwrap_or(f64::NAN);
        let p = c.xy();
        if (bottom - top).abs() < 0.01 && r.contains(&p) {
            ctx.bb.set("bowl_at", Value::Point(p));
            ctx.log("bowl_placed", &[("x", fmt2(p.x)), ("y", fmt2(p.y)), ("edge_distance", fmt3(edge_distance(&r, &p)))]);
            true
        } else {
            ctx.log("bowl_misplaced", &[("x", fmt2(p.x)), ("y", fmt2(p.y))]);
            false
        }
    })
}

pub fn build(_ctx: &mut Ctx) -> Result<Node<Ctx>, TaskError> {
    let bowl_spot = Rc::new(edge_spot);
    Ok(Node::sequence(
        "breakfast",
        vec![
            view_counter("find_bowl"),
            target("bowl"),
            plan_grasp("plan_bowl_grasp", GraspFilter::Any),
            execute_grasp(),
            emit("bowl_grasped", |_| Vec::new()),
            goto("to_table", pose_fn(|ctx| {
                let (r, _) = table(ctx)?;
                facing_pose(&ctx.world, r.center(), TABLE_VIEW_DISTANCE + (r.max.x - r.min.x) / 2.0, ctx.pose().position(), 0.05)
            })),
            place_at("place_bowl", bowl_spot),
            verify_bowl(),
            view_counter("find_cereal"),
            target("cereal"),
            plan_grasp("plan_cereal_grasp", GraspFilter::UpsideDown),
            execute_grasp(),
            emit("cereal_grasped", |ctx| {
                let up = ctx.grasp.is_some_and(|g| g.upside_down);
                let face = ctx.grasp.map(|g| format!("{:?}", g.face).to_lowercase()).unwrap_or_default();
                vec![("upside_down", up.to_string()), ("face", face)]
            }),
            goto("to_bowl", pose_fn(|ctx| {
                let p = ctx.bb.get_point("bowl_at").ok()?;
                facing_pose(&ctx.world, p, TABLE_VIEW_DISTANCE, ctx.pose().position(), 0.05)
            })),
            emit("pour_skipped", |_| vec![("reason", "no_pour_sensing".into())]),
        ],
    ))
}
