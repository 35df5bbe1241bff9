//! Serve drinks: see what the bar offers, find a guest without a drink, take
//! the order by voice, fetch the drink and hand it over.

use std::f64::consts::PI;

use super::facing_pose;
use crate::executive::blackboard::Value;
use crate::executive::bt::Node;
use crate::executive::context::{fmt2, TaskError};
use crate::executive::grasping::{execute_grasp, plan_grasp, set_target, simple_top_grasp, GraspFilter, GraspTarget};
use crate::executive::skills::*;
use crate::geom::P2;
use crate::semantics::{normalize_label, rhyme_correct};
use crate::sim::sensors::skeleton_detect;

const BAR_VIEW_DISTANCE: f64 = 1.1;
const TALK_DISTANCE: f64 = 0.9;
const HAND_OVER_DISTANCE: f64 = 0.7;
const SEARCH_HEADINGS: usize = 8;
const ASK_LIMIT: u32 = 4;

fn bar_center(ctx: &Ctx) -> P2 {
    let z = ctx.world.zones["bar"];
    P2::new(z.x, z.y)
}

fn to_bar() -> Node<Ctx> {
    goto("to_bar", pose_fn(|ctx| facing_pose(&ctx.world, bar_center(ctx), BAR_VIEW_DISTANCE, ctx.pose().position(), 0.05)))
}

fn on_menu(ctx: &Ctx, label: &str) -> Option<String> {
    let l = normalize_label(label);
    ctx.world.menu.iter().find(|m| normalize_label(m) == l).cloned()
}

/// Menu items currently seen on the bar.
fn scan_bar() -> Node<Ctx> {
    compute("scan_bar", |ctx| {
        let bar = ctx.world.zones["bar"];
        let c = P2::new(bar.x, bar.y);
        let mut items: Vec<String> = ctx
            .cloud
            .estimates()
            .filter(|e| (e.centroid.xy() - c).norm() <= bar.r)
            .filter_map(|e| on_menu(ctx, &e.class_label))
            .collect();
        items.sort();
        items.dedup();
        ctx.log("drinks_available", &[("items", items.join(",")), ("count", items.len().to_string())]);
        ctx.bb.set("available", Value::List(items));
        true
    })
}

/// Head-camera sweep recording every person seen, with and without drinks.
fn look_around() -> Node<Ctx> {
    let mut steps = vec![look("look_level", 0.0, 0.0)];
    for k in 0..SEARCH_HEADINGS {
        let h = k as f64 * 2.0 * PI / SEARCH_HEADINGS as f64;
        steps.push(turn_to(&format!("face_{k}"), move |_| Some(h)));
        steps.push(compute(&format!("people_{k}"), |ctx| {
            for s in skeleton_detect(&ctx.world) {
                ctx.bb.set(&format!("person/{}", s.person_id), Value::Point(s.torso.xy()));
                ctx.bb.set(&format!("drink/{}", s.person_id), Value::Bool(s.has_drink));
            }
            true
        }));
    }
    Node::sequence("look_around", steps)
}

fn choose_guest() -> Node<Ctx> {
    compute("choose_guest", |ctx| {
        let me = ctx.pose().position();
        let seen: Vec<(String, P2, bool)> = ctx
            .bb
            .keys()
            .filter_map(|k| k.strip_prefix("person/").map(str::to_string))
            .filter_map(|id| {
                let p = ctx.bb.get_point(&format!("person/{id}")).ok()?;
                let d = ctx.bb.get_bool(&format!("drink/{id}")).ok()?;
                Some((id, p, d))
            })
            .collect();
        let served = seen.iter().filter(|s| s.2).count();
        let Some((id, p, _)) = seen
            .iter()
            .filter(|s| !s.2)
            .min_by(|a, b| (a.1 - me).norm().total_cmp(&(b.1 - me).norm()).then(a.0.cmp(&b.0)))
        else {
            ctx.log("no_guest", &[("seen", seen.len().to_string())]);
            return false;
        };
        ctx.bb.set("guest", Value::Text(id.clone()));
        ctx.bb.set("guest_at", Value::Point(*p));
        ctx.log(
            "guest_found",
            &[("person", id.clone()), ("x", fmt2(p.x)), ("y", fmt2(p.y)), ("seen", seen.len().to_string()), ("with_drink", served.to_string())],
        );
        true
    })
}

fn near_guest(label: &str, distance: f64) -> Node<Ctx> {
    goto(label, pose_fn(move |ctx| {
        let p = ctx.bb.get_point("guest_at").ok()?;
        facing_pose(&ctx.world, p, distance, ctx.pose().position(), 0.05)
    }))
}

/// One question and answer. Fails when the answer is not understood or not
/// on the bar, so a retry asks again.
fn ask_order() -> Node<Ctx> {
    let listen = compute("listen", |ctx| {
        let Ok(guest) = ctx.bb.get_text("guest") else { return false };
        let key = format!("heard/{guest}");
        let k = ctx.bb.get_int(&key).unwrap_or(0);
        let Some(said) = ctx.world.dialogue.get(&guest).and_then(|d| d.get(k as usize)).cloned() else {
            ctx.log("no_answer", &[("person", guest)]);
            return false;
        };
        ctx.bb.set(&key, Value::Int(k + 1));
        let heard = said.split_whitespace().last().unwrap_or_default().to_string();
        let Some(item) = rhyme_correct(&heard, &ctx.world.menu) else {
            ctx.log("order_unclear", &[("person", guest), ("heard", heard)]);
            return false;
        };
        ctx.log("order_heard", &[("person", guest.clone()), ("heard", heard), ("item", item.clone())]);
        let available = match ctx.bb.get("available") {
            Ok(Value::List(v)) => v.clone(),
            _ => Vec::new(),
        };
        if !available.contains(&item) {
            ctx.log("unavailable_reported", &[("person", guest), ("item", item)]);
            return false;
        }
        ctx.bb.set("order", Value::Text(item.clone()));
        ctx.log("order_taken", &[("person", guest), ("item", item)]);
        true
    });
    Node::sequence("ask", vec![wait("question", 1.0), listen])
}

fn target_drink() -> Node<Ctx> {
    compute("target_drink", |ctx| {
        let Ok(item) = ctx.bb.get_text("order") else { return false };
        let bar = bar_center(ctx);
        let key = normalize_label(&item);
        let Some(e) = ctx
            .cloud
            .estimates()
            .filter(|e| normalize_label(&e.class_label) == key)
            .min_by(|a, b| (a.centroid.xy() - bar).norm().total_cmp(&(b.centroid.xy() - bar).norm()))
        else {
            ctx.log("drink_lost", &[("item", item)]);
            return false;
        };
        let t = GraspTarget { class: e.class_label.clone(), aabb: e.aabb };
        let id = e.id;
        ctx.cloud.remove(id);
        set_target(ctx, &t);
        true
    })
}

fn hand_over() -> Node<Ctx> {
    compute("hand_over", |ctx| {
        let Ok(guest) = ctx.bb.get_text("guest") else { return false };
        let me = ctx.pose().position();
        let close = ctx.world.person(&guest).is_some_and(|p| (p.position(ctx.world.clock) - me).norm() <= HAND_OVER_DISTANCE + 0.3);
        let class = ctx.bb.get_text("held_class").unwrap_or_default();
        if !close || ctx.world.give_to_person(&guest).is_none() {
            ctx.log("delivery_failed", &[("person", guest), ("item", class)]);
            return false;
        }
        ctx.log("drink_delivered", &[("person", guest), ("item", class)]);
        true
    })
}

pub fn build(ctx: &mut Ctx) -> Result<Node<Ctx>, TaskError> {
    let count = ctx.param_or("serve_count", 1.0).max(1.0) as usize;
    let grasp = |simple: bool| {
        if simple {
            simple_top_grasp()
        } else {
            Node::sequence("pick", vec![plan_grasp("plan_grasp", GraspFilter::Any), execute_grasp()])
        }
    };
    let mut seq = Vec::new();
    for k in 0..count {
        seq.push(Node::sequence(
            &format!("guest_{k}"),
            vec![
                to_bar(),
                look("look_at_bar", 0.0, -0.45),
                observe("observe_bar", 1.0),
                scan_bar(),
                look_around(),
                choose_guest(),
                near_guest("to_guest", TALK_DISTANCE),
                Node::retry(ASK_LIMIT, ask_order()),
                to_bar(),
                look("look_at_bar", 0.0, -0.45),
                observe("observe_bar", 1.0),
                target_drink(),
                grasp(ctx.cfg.simple_top_grasp),
                near_guest("to_guest_with_drink", HAND_OVER_DISTANCE),
                hand_over(),
                compute("forget_people", |ctx| {
                    let keys: Vec<String> = ctx.bb.keys().filter(|k| k.starts_with("person/") || k.starts_with("drink/")).map(str::to_string).collect();
                    for k in keys {
                        ctx.bb.remove(&k);
                    }
                    true
                }),
            ],
        ));
    }
    Ok(Node::sequence("drinks", seq))
}
