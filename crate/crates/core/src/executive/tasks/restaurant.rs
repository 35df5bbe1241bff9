//! Restaurant: no prior map. Find the bar by its waving bartender, look for a
//! waving customer, drive up beside their table using only the local
//! costmap, take the order, relay it at the bar and bring it back.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::executive::blackboard::Value;
use crate::executive::bt::{Node, Status};
use crate::executive::context::{fmt2, TaskError};
use crate::executive::skills::*;
use crate::geom::{wrap_angle, P2};
use crate::mapless::{approach_point, fuse_local_map, LocalCostmap, MapCell};
use crate::planner::navigation::{FollowStatus, Waypoint, WaypointFollower};
use crate::semantics::rhyme_correct;
use crate::sim::sensors::{lidar_scan, projected_obstacles, skeleton_detect};
use crate::sim::Command;
use crate::tracking::{detect_wave, WaveFrame, WaveParams};

const SWEEP_HEADINGS: usize = 8;
const WATCH_FRAMES: usize = 8;
const MAP_WIDTH: usize = 120;
const MAP_RESOLUTION: f64 = 0.1;
const PROJECT_SPACING: f64 = 0.05;
/// Occupied cell searched around a person to seed their island.
const SEED_RADIUS: f64 = 1.2;
const REPLAN_TICKS: u32 = 20;
const PATH_STRIDE: usize = 3;
/// People waving this close to the bar are staff.
const BAR_EXCLUSION: f64 = 1.5;
const PICKUP_WAIT_S: f64 = 3.0;
/// Margin added to the robot radius when keeping clear of an island.
const CLEARANCE: f64 = 0.1;

/// Turns through the sweep headings, watching a few frames at each, and
/// records everyone seen waving under `wave/<id>`. With `first_only` it
/// stops at the first heading where someone waves.
fn sweep_for_waves(label: &str, first_only: bool) -> Node<Ctx> {
    Node::leaf(label, move || {
        let mut k = 0usize;
        let mut frames: BTreeMap<String, Vec<WaveFrame>> = BTreeMap::new();
        let mut watched = 0usize;
        Box::new(move |ctx: &mut Ctx| {
            while k < SWEEP_HEADINGS {
                let h = wrap_angle(k as f64 * 2.0 * PI / SWEEP_HEADINGS as f64);
                let err = wrap_angle(h - ctx.pose().theta);
                if err.abs() > 1e-9 {
                    let w = ctx.world.config.max_angular;
                    ctx.command(Command::base(0.0, 0.0, (err / ctx.dt()).clamp(-w, w)));
                    return Status::Running;
                }
                let skeletons = skeleton_detect(&ctx.world);
                frames.retain(|id, _| skeletons.iter().any(|s| &s.person_id == id));
                for s in &skeletons {
                    frames.entry(s.person_id.clone()).or_default().push(WaveFrame { shoulder: s.shoulder, wrist: s.wrist });
                }
                watched += 1;
                if watched < WATCH_FRAMES {
                    return Status::Running;
                }
                let dt = ctx.dt();
                let mut found = false;
                for s in &skeletons {
                    if frames.get(&s.person_id).is_some_and(|f| detect_wave(f, dt, &WaveParams::default())) {
                        ctx.bb.set(&format!("wave/{}", s.person_id), Value::Point(s.torso.xy()));
                        found = true;
                    }
                }
                frames.clear();
                watched = 0;
                k += 1;
                if found && first_only {
                    break;
                }
            }
            Status::Success
        })
    })
}

fn wavers(ctx: &Ctx) -> Vec<(String, P2)> {
    ctx.bb
        .keys()
        .filter_map(|k| k.strip_prefix("wave/").map(str::to_string))
        .filter_map(|id| ctx.bb.get_point(&format!("wave/{id}")).ok().map(|p| (id, p)))
        .collect()
}

fn clear_wavers(ctx: &mut Ctx) {
    let keys: Vec<String> = ctx.bb.keys().filter(|k| k.starts_with("wave/")).map(str::to_string).collect();
    for k in keys {
        ctx.bb.remove(&k);
    }
}

fn find_bar() -> Node<Ctx> {
    Node::sequence(
        "find_bar",
        vec![
            look("look_level", 0.0, 0.0),
            sweep_for_waves("watch_for_bartender", true),
            compute("bar_found", |ctx| {
                let me = ctx.pose().position();
                let Some((id, p)) = wavers(ctx).into_iter().min_by(|a, b| (a.1 - me).norm().total_cmp(&(b.1 - me).norm())) else {
                    ctx.log("bar_not_found", &[]);
                    return false;
                };
                clear_wavers(ctx);
                ctx.bb.set("bar_at", Value::Point(p));
                ctx.bb.set("bartender", Value::Text(id));
                ctx.log("bar_found", &[("x", fmt2(p.x)), ("y", fmt2(p.y))]);
                true
            }),
        ],
    )
}

fn find_customer() -> Node<Ctx> {
    Node::sequence(
        "find_customer",
        vec![
            sweep_for_waves("watch_for_customers", false),
            compute("customer_found", |ctx| {
                let me = ctx.pose().position();
                let Ok(bar) = ctx.bb.get_point("bar_at") else { return false };
                let customers: Vec<(String, P2)> = wavers(ctx).into_iter().filter(|(_, p)| (p - bar).norm() > BAR_EXCLUSION).collect();
                clear_wavers(ctx);
                let Some((id, p)) = customers.iter().min_by(|a, b| (a.1 - me).norm().total_cmp(&(b.1 - me).norm())).cloned() else {
                    ctx.log("no_customer", &[]);
                    return false;
                };
                ctx.bb.set("customer_at", Value::Point(p));
                ctx.bb.set("customer", Value::Text(id));
                ctx.log("customer_found", &[("x", fmt2(p.x)), ("y", fmt2(p.y)), ("waving", customers.len().to_string())]);
                true
            }),
        ],
    )
}

fn local_map(ctx: &Ctx) -> LocalCostmap {
    fuse_local_map(&lidar_scan(&ctx.world), &projected_obstacles(&ctx.world, PROJECT_SPACING), MAP_WIDTH, MAP_RESOLUTION)
}

/// Occupied cell nearest to a robot-frame point, within the seed radius.
fn seed_cell(map: &LocalCostmap, p: P2) -> Option<(usize, usize)> {
    map.cells()
        .filter(|(_, v)| *v == MapCell::Occupied)
        .map(|(c, _)| ((map.center(c) - p).norm(), c))
        .filter(|(d, _)| *d <= SEED_RADIUS)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, c)| c)
}

/// Faces the person stored under `key`, then drives beside the island
/// around them, re-fusing the local map every few ticks.
fn approach(label: &str, key: &'static str) -> Node<Ctx> {
    let face = turn_to(&format!("face_{label}"), move |ctx| {
        let d = ctx.bb.get_point(key).ok()? - ctx.pose().position();
        Some(d.y.atan2(d.x))
    });
    Node::sequence(label, vec![face, drive_beside(label, key)])
}

fn drive_beside(label: &str, key: &'static str) -> Node<Ctx> {
    let label = label.to_string();
    Node::leaf(&label.clone(), move || {
        let label = label.clone();
        let mut follower: Option<WaypointFollower> = None;
        let mut since_plan = 0u32;
        let mut logged = false;
        Box::new(move |ctx: &mut Ctx| {
            if follower.is_none() || since_plan >= REPLAN_TICKS {
                since_plan = 0;
                let Ok(target) = ctx.bb.get_point(key) else { return Status::Failure };
                let pose = ctx.pose();
                let map = local_map(ctx);
                let local = pose.inverse_transform(target);
                let planned = seed_cell(&map, local)
                    .ok_or_else(|| "no_island".to_string())
                    .and_then(|seed| approach_point(&map, map.robot_cell(), seed, ctx.world.config.robot_radius + CLEARANCE).map_err(|e| e.to_string()));
                let a = match planned {
                    Ok(a) => a,
                    Err(reason) => {
                        ctx.log("approach_failed", &[("leg", label.clone()), ("reason", reason)]);
                        return Status::Failure;
                    }
                };
                let k = a.path.iter().position(|c| *c == a.cell).unwrap_or(0);
                let mut wps: Vec<Waypoint> = a.path[..=k]
                    .iter()
                    .enumerate()
                    .skip(1)
                    .filter(|(i, _)| i % PATH_STRIDE == 0 || *i == k)
                    .map(|(_, c)| {
                        let p = pose.transform(map.center(*c));
                        Waypoint::at(p.x, p.y)
                    })
                    .collect();
                let goal = pose.transform(map.center(a.cell));
                let facing = (target - goal).y.atan2((target - goal).x);
                match wps.last_mut() {
                    Some(last) => last.heading = Some(facing),
                    None => wps.push(Waypoint { position: goal, heading: Some(facing) }),
                }
                if !logged {
                    logged = true;
                    ctx.log(
                        "approach_planned",
                        &[("leg", label.clone()), ("island_cells", a.island.cells.len().to_string()), ("x", fmt2(goal.x)), ("y", fmt2(goal.y))],
                    );
                }
                follower = Some(WaypointFollower::new(wps, ctx.nav()));
            }
            since_plan += 1;
            match follower.as_mut().expect("planned above").tick(&ctx.world, ctx.dt()) {
                FollowStatus::Running(cmd) => {
                    ctx.command(cmd);
                    Status::Running
                }
                FollowStatus::Arrived => {
                    let d = ctx.bb.get_point(key).map(|p| (p - ctx.pose().position()).norm()).unwrap_or(f64::NAN);
                    ctx.log("arrived", &[("leg", label.clone()), ("distance", fmt2(d))]);
                    Status::Success
                }
                FollowStatus::Failed(e) => {
                    ctx.log("approach_failed", &[("leg", label.clone()), ("reason", e.to_string())]);
                    Status::Failure
                }
            }
        })
    })
}

fn take_order() -> Node<Ctx> {
    compute("take_order", |ctx| {
        let Ok(who) = ctx.bb.get_text("customer") else { return false };
        let key = format!("heard/{who}");
        let k = ctx.bb.get_int(&key).unwrap_or(0);
        let Some(said) = ctx.world.dialogue.get(&who).and_then(|d| d.get(k as usize)).cloned() else {
            ctx.log("no_answer", &[]);
            return false;
        };
        ctx.bb.set(&key, Value::Int(k + 1));
        let heard = said.split_whitespace().last().unwrap_or_default().to_string();
        let Some(item) = rhyme_correct(&heard, &ctx.world.menu) else {
            ctx.log("order_unclear", &[("heard", heard)]);
            return false;
        };
        ctx.bb.set("order", Value::Text(item.clone()));
        ctx.log("order_taken", &[("heard", heard), ("item", item)]);
        true
    })
}

pub fn build(_ctx: &mut Ctx) -> Result<Node<Ctx>, TaskError> {
    let order = |ctx: &Ctx| vec![("item", ctx.bb.get_text("order").unwrap_or_default())];
    Ok(Node::sequence(
        "restaurant",
        vec![
            find_bar(),
            find_customer(),
            approach("to_customer", "customer_at"),
            Node::retry(3, Node::sequence("ask", vec![wait("question", 1.0), take_order()])),
            approach("to_bar", "bar_at"),
            emit("order_relayed", order),
            wait("bartender_loads_tray", PICKUP_WAIT_S),
            approach("back_to_customer", "customer_at"),
            emit("order_delivered", order),
        ],
    ))
}
