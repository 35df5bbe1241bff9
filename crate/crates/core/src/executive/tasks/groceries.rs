//! Storing groceries: find the table by its edge height, pick a random
//! object from it and put it on the shelf where it belongs.

use std::collections::BTreeMap;
use std::rc::Rc;

use rand::Rng;

use super::facing_pose;
use crate::executive::blackboard::Value;
use crate::executive::bt::{Node, Status};
use crate::executive::context::{fmt2, TaskError};
use crate::executive::grasping::{execute_grasp, object_center, place_at, plan_grasp, set_target, simple_top_grasp, GraspFilter, GraspTarget};
use crate::executive::skills::*;
use crate::geom::{Pose2, Rect, P2};
use crate::object_cloud::{ransac_edge, RansacParams, SurfaceKind, SurfaceModel};
use crate::semantics::{choose_shelf, CategoryKb, EmbeddingTable, ShelfScore, DEFAULT_CATEGORIES, DEFAULT_EMBEDDINGS};
use crate::sim::sensors::surface_profile;
use crate::sim::ObjectId;

const TABLE_VIEW_DISTANCE: f64 = 1.1;
const SHELF_VIEW_DISTANCE: f64 = 1.6;
const SCAN_HEADINGS: usize = 4;
const SEARCH_BAND: f64 = 0.15;

#[derive(Debug, Clone)]
struct Board {
    name: String,
    rect: Rect,
    top: f64,
}

fn boards(ctx: &Ctx) -> Vec<Board> {
    ctx.world
        .static_boxes
        .iter()
        .filter(|b| b.name.starts_with("shelf_"))
        .map(|b| Board { name: b.name.clone(), rect: b.aabb.footprint(), top: b.aabb.max.z })
        .collect()
}

fn shelves_rect(ctx: &Ctx) -> Rect {
    let bs = boards(ctx);
    let mut r = bs[0].rect;
    for b in &bs[1..] {
        r = Rect::new(P2::new(r.min.x.min(b.rect.min.x), r.min.y.min(b.rect.min.y)), P2::new(r.max.x.max(b.rect.max.x), r.max.y.max(b.rect.max.y)));
    }
    r
}

/// Highest board at or below height `z` (an object bottom or centroid) under `p`.
fn board_under<'a>(bs: &'a [Board], p: &P2, z: f64) -> Option<&'a Board> {
    bs.iter()
        .filter(|b| b.rect.inflate(0.05).contains(p) && b.top <= z + 0.03)
        .max_by(|a, b| a.top.total_cmp(&b.top))
}

/// Turns through evenly spaced headings and fits a horizontal edge at the
/// configured table height to the surface samples in front of each.
fn find_table() -> Node<Ctx> {
    Node::leaf("find_table", || {
        let mut k = 0usize;
        let mut best: Option<(usize, f64, Rect)> = None;
        Box::new(move |ctx: &mut Ctx| {
            let target = ctx.param_or("table_height", 0.7);
            while k < SCAN_HEADINGS {
                let h = k as f64 * 2.0 * std::f64::consts::PI / SCAN_HEADINGS as f64;
                let err = crate::geom::wrap_angle(h - ctx.pose().theta);
                if err.abs() > 1e-9 {
                    let w = ctx.world.config.max_angular;
                    ctx.command(crate::sim::Command::base(0.0, 0.0, (err / ctx.dt()).clamp(-w, w)));
                    return Status::Running;
                }
                // Only surfaces in a band around the expected height are candidates.
                let samples: Vec<_> = surface_profile(&ctx.world, h, 0.4, 3.0, 0.6, 0.05)
                    .into_iter()
                    .filter(|p| (p.z - target).abs() <= SEARCH_BAND)
                    .collect();
                let o = ctx.pose().position();
                let (c, s) = (h.cos(), h.sin());
                let profile: Vec<P2> =
                    samples.iter().map(|p| P2::new((p.x - o.x) * c + (p.y - o.y) * s, p.z)).collect();
                let params = RansacParams { iterations: 200, ..RansacParams::default() };
                if let Some(m) = ransac_edge(&profile, target, &params, &mut ctx.rng) {
                    let xs = m.inliers.iter().map(|&i| samples[i].x);
                    let ys = m.inliers.iter().map(|&i| samples[i].y);
                    let rect = Rect::new(
                        P2::new(xs.clone().fold(f64::INFINITY, f64::min), ys.clone().fold(f64::INFINITY, f64::min)),
                        P2::new(xs.fold(f64::NEG_INFINITY, f64::max), ys.fold(f64::NEG_INFINITY, f64::max)),
                    );
                    if best.as_ref().is_none_or(|(n, _, _)| m.inliers.len() > *n) {
                        best = Some((m.inliers.len(), m.height, rect));
                    }
                }
                k += 1;
            }
            let Some((n, height, rect)) = best.clone() else {
                ctx.log("table_not_found", &[("height", fmt2(target))]);
                return Status::Failure;
            };
            let c = rect.center();
            ctx.bb.set("table_height", Value::Float(height));
            ctx.bb.set("table_min", Value::Point(rect.min));
            ctx.bb.set("table_max", Value::Point(rect.max));
            ctx.log(
                "table_found",
                &[("height", fmt2(height)), ("x", fmt2(c.x)), ("y", fmt2(c.y)), ("inliers", n.to_string())],
            );
            Status::Success
        })
    })
}

fn table(ctx: &Ctx) -> Option<(f64, Rect)> {
    Some((ctx.bb.get_f64("table_height").ok()?, Rect::new(ctx.bb.get_point("table_min").ok()?, ctx.bb.get_point("table_max").ok()?)))
}

fn choose_object() -> Node<Ctx> {
    compute("choose_object", |ctx| {
        let Some((h, rect)) = table(ctx) else { return false };
        let surface = SurfaceModel { kind: SurfaceKind::HorizontalEdge, height: h, inliers: Vec::new(), support: (0.0, 0.0) };
        let on_table: Vec<(u32, String, crate::geom::Aabb)> = ctx
            .cloud
            .query_above_surface(&surface, &rect.inflate(0.05))
            .into_iter()
            .map(|e| (e.id, e.class_label.clone(), e.aabb))
            .collect();
        if on_table.is_empty() {
            ctx.log("no_objects", &[]);
            return false;
        }
        let pick = ctx.rng.random_range(0..on_table.len());
        let (id, class, aabb) = on_table[pick].clone();
        ctx.cloud.remove(id);
        set_target(ctx, &GraspTarget { class: class.clone(), aabb });
        ctx.log("object_chosen", &[("class", class), ("candidates", on_table.len().to_string())]);
        true
    })
}

fn pick(simple: bool) -> Node<Ctx> {
    let grasp = if simple {
        simple_top_grasp()
    } else {
        Node::sequence("pick", vec![plan_grasp("plan_grasp", GraspFilter::Any), execute_grasp()])
    };
    Node::sequence(
        "grasp_object",
        vec![
            grasp,
            emit("object_grasped", |ctx| {
                let face = ctx.grasp.map(|p| format!("{:?}", p.face).to_lowercase()).unwrap_or_default();
                vec![("class", ctx.bb.get_text("held_class").unwrap_or_default()), ("face", face)]
            }),
        ],
    )
}

fn decide_shelf() -> Node<Ctx> {
    compute("choose_shelf", |ctx| {
        let Ok(class) = ctx.bb.get_text("held_class") else { return false };
        let bs = boards(ctx);
        let mut contents: BTreeMap<String, Vec<String>> = bs.iter().map(|b| (b.name.clone(), Vec::new())).collect();
        for e in ctx.cloud.estimates() {
            if let Some(b) = board_under(&bs, &e.centroid.xy(), e.centroid.z) {
                contents.entry(b.name.clone()).or_default().push(e.class_label.clone());
            }
        }
        let (Ok(kb), Ok(emb)) = (CategoryKb::parse(DEFAULT_CATEGORIES), EmbeddingTable::parse(DEFAULT_EMBEDDINGS)) else {
            return false;
        };
        let mode = if ctx.world.params.get("shelf_score").is_some_and(|v| v == "max") { ShelfScore::Max } else { ShelfScore::Mean };
        let shelf = match choose_shelf(&class, &contents, &kb, &emb, mode) {
            Ok(s) => s,
            Err(e) => {
                ctx.log("shelf_unknown", &[("class", class), ("reason", e.to_string())]);
                return false;
            }
        };
        let by_category = kb
            .category(&class)
            .is_some_and(|c| contents[&shelf].iter().any(|i| kb.category(i) == Some(c)));
        let rule = if by_category { "category" } else { "similarity" };
        ctx.bb.set("shelf", Value::Text(shelf.clone()));
        ctx.log("shelf_chosen", &[("class", class), ("shelf", shelf), ("rule", rule.into())]);
        true
    })
}

/// Free spot on the chosen board, away from what is already there, on the
/// side facing `view`.
fn shelf_spot(ctx: &Ctx) -> Option<(P2, f64)> {
    let name = ctx.bb.get_text("shelf").ok()?;
    let bs = boards(ctx);
    let b = bs.iter().find(|b| b.name == name)?;
    let others: Vec<P2> = ctx
        .cloud
        .estimates()
        .filter(|e| board_under(&bs, &e.centroid.xy(), e.centroid.z).is_some_and(|o| o.name == name))
        .map(|e| e.centroid.xy())
        .collect();
    let view = ctx.pose().position();
    let inset = 0.1;
    let r = b.rect;
    let mut best: Option<(f64, P2)> = None;
    let n = 12;
    for i in 0..=n {
        for j in 0..=n {
            let p = P2::new(
                r.min.x + inset + (r.max.x - r.min.x - 2.0 * inset).max(0.0) * i as f64 / n as f64,
                r.min.y + inset + (r.max.y - r.min.y - 2.0 * inset).max(0.0) * j as f64 / n as f64,
            );
            let clear = others.iter().map(|o| (o - p).norm()).fold(1.0, f64::min);
            let score = clear.min(0.3) - 0.1 * (p - view).norm();
            if best.is_none_or(|(s, _)| score > s + 1e-12) {
                best = Some((score, p));
            }
        }
    }
    best.map(|(_, p)| (p, b.top))
}

fn verify_placement() -> Node<Ctx> {
    compute("verify_placement", |ctx| {
        let Some(c) = object_center(ctx) else { return false };
        let shelf = ctx.bb.get_text("shelf").unwrap_or_default();
        let class = ctx.bb.get_text("held_class").unwrap_or_default();
        let bs = boards(ctx);
        let id = ObjectId(ctx.bb.get_int("held_id").unwrap_or(-1) as u32);
        let bottom = ctx.world.object(id).map(|o| o.aabb.min.z).unwrap_or(f64::NAN);
        let on = board_under(&bs, &c.xy(), bottom).filter(|b| (b.top - bottom).abs() < 0.01).map(|b| b.name.clone());
        if on.as_deref() == Some(shelf.as_str()) {
            ctx.log("object_placed", &[("class", class), ("shelf", shelf)]);
            true
        } else {
            ctx.log("object_misplaced", &[("class", class), ("shelf", shelf), ("on", on.unwrap_or_else(|| "none".into()))]);
            false
        }
    })
}

pub fn build(ctx: &mut Ctx) -> Result<Node<Ctx>, TaskError> {
    let pantry = ctx.world.zones["pantry"];
    let count = ctx.param_or("place_count", 1.0).max(1.0) as usize;
    let simple = ctx.cfg.simple_top_grasp;
    let mut seq = vec![
        goto("to_pantry", pose_fn(move |ctx| Some(Pose2::new(pantry.x, pantry.y, ctx.pose().theta)))),
        find_table(),
    ];
    for k in 0..count {
        seq.push(Node::sequence(
            &format!("object_{k}"),
            vec![
                goto("to_table_view", pose_fn(|ctx| {
                    let (_, r) = table(ctx)?;
                    facing_pose(&ctx.world, r.center(), TABLE_VIEW_DISTANCE, ctx.pose().position(), 0.05)
                })),
                look("look_at_table", 0.0, -0.45),
                observe("observe_table", 1.0),
                choose_object(),
                pick(simple),
                goto("to_shelf_view", pose_fn(|ctx| {
                    let r = shelves_rect(ctx);
                    facing_pose(&ctx.world, r.center(), SHELF_VIEW_DISTANCE, ctx.pose().position(), 0.05)
                })),
                look("look_at_shelves", 0.0, -0.2),
                observe("observe_shelves", 1.0),
                decide_shelf(),
                place_at("place", Rc::new(shelf_spot)),
                verify_placement(),
                look("look_ahead", 0.0, -0.35),
            ],
        ));
    }
    Ok(Node::sequence("groceries", seq))
}
