//! Carry my luggage: take the bag, lock onto the operator standing in front,
//! follow their legs, and when the track drops recover it by torso color or,
//! failing that, by asking the operator to wave.

use std::collections::BTreeMap;

use crate::executive::blackboard::Value;
use crate::executive::bt::{Node, Status};
use crate::executive::context::{fmt2, TaskError};
use crate::executive::skills::*;
use crate::geom::{wrap_angle, P2, V2};
use crate::planner::navigation::{plan_route, FollowStatus, WaypointFollower};
use crate::sim::kinematics::{lift_for_hand_down, ArmJoints};
use crate::sim::sensors::{lidar_scan, skeleton_detect, Skeleton};
use crate::sim::Command;
use crate::tracking::{
    associate_track, detect_legs, detect_wave, reidentify, ColorHistogram, LegParams, PersonTrack, ReidCandidate,
    TrackParams, TrackState, WaveFrame, WaveParams,
};

const FOLLOW_DISTANCE: f64 = 1.0;
/// Slack around the follow distance before the base moves.
const FOLLOW_BAND: f64 = 0.3;
const REPLAN_TICKS: u32 = 10;
const TRACE_EVERY_TICKS: u32 = 10;
/// Operator standing still this long means we have arrived.
const ARRIVE_STILL_S: f64 = 5.0;
const STILL_RADIUS: f64 = 0.1;
/// Color re-identification attempts before asking for a wave.
const REID_PATIENCE_S: f64 = 3.0;
const WAVE_WAIT_S: f64 = 15.0;
const PREDICT_HORIZON_S: f64 = 3.0;
const LEG_SNAP: f64 = 0.5;
const MAX_LOSSES: u32 = 5;
const CARRY_TCP: f64 = 0.8;
/// The operator's person id in the arena, used only to annotate the trace.
const OPERATOR: &str = "operator";

fn leg_positions(ctx: &Ctx) -> Vec<P2> {
    let pose = ctx.pose();
    detect_legs(&lidar_scan(&ctx.world), &LegParams::default()).iter().map(|c| pose.transform(c.center)).collect()
}

fn histogram(s: &Skeleton) -> Option<ColorHistogram> {
    ColorHistogram::from_samples(&s.torso_samples).ok()
}

/// Leg candidate closest to a torso, if any is near enough to belong to it.
fn legs_near(ctx: &Ctx, torso: P2) -> P2 {
    leg_positions(ctx)
        .into_iter()
        .map(|p| ((p - torso).norm(), p))
        .filter(|(d, _)| *d <= LEG_SNAP)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map_or(torso, |(_, p)| p)
}

fn track_fields(track: &PersonTrack) -> Vec<(&'static str, String)> {
    let state = match track.state {
        TrackState::Tracking => "tracking",
        TrackState::Lost => "lost",
    };
    vec![("state", state.into()), ("x", fmt2(track.position.x)), ("y", fmt2(track.position.y))]
}

fn stop(ctx: &mut Ctx) {
    ctx.command(Command::base(0.0, 0.0, 0.0));
}

fn face(ctx: &mut Ctx, p: P2) {
    let pose = ctx.pose();
    let d = p - pose.position();
    let err = wrap_angle(d.y.atan2(d.x) - pose.theta);
    let w = ctx.world.config.max_angular;
    ctx.command(Command::base(0.0, 0.0, (err / ctx.dt()).clamp(-w, w) * 0.5));
}

fn receive_bag() -> Node<Ctx> {
    compute("receive_bag", |ctx| {
        let Some(id) = ctx.world.objects.iter().find(|o| o.class_label == "luggage").map(|o| o.id) else {
            return true;
        };
        if !ctx.world.handover(id) {
            return false;
        }
        ctx.bb.set("held_id", Value::Int(id.0 as i64));
        ctx.log("bag_received", &[]);
        true
    })
}

/// Photo of the person straight ahead plus the legs under them.
fn set_target() -> Node<Ctx> {
    compute("set_target", |ctx| {
        let pose = ctx.pose();
        let ahead = skeleton_detect(&ctx.world).into_iter().min_by(|a, b| {
            let off = |s: &Skeleton| {
                let d = s.torso.xy() - pose.position();
                wrap_angle(d.y.atan2(d.x) - pose.theta).abs()
            };
            off(a).total_cmp(&off(b))
        });
        let Some(s) = ahead else {
            ctx.log("target_missing", &[]);
            return false;
        };
        let Some(h) = histogram(&s) else { return false };
        let at = legs_near(ctx, s.torso.xy());
        let t = ctx.world.clock;
        let track = PersonTrack::new(at, t, h);
        ctx.log("target_set", &[("x", fmt2(at.x)), ("y", fmt2(at.y))]);
        ctx.track = Some(track);
        true
    })
}

/// Follows the tracked legs. Succeeds once the operator has stood still
/// next to the robot; fails when the track is lost.
fn follow() -> Node<Ctx> {
    Node::leaf("follow", || {
        let mut follower: Option<WaypointFollower> = None;
        let mut since_plan = 0u32;
        let mut ticks = 0u32;
        let mut history: Vec<(f64, P2)> = Vec::new();
        let mut still: Option<(f64, P2)> = None;
        Box::new(move |ctx: &mut Ctx| {
            let Some(track) = ctx.track.clone() else { return Status::Failure };
            let t = ctx.world.clock;
            let next = associate_track(&track, &leg_positions(ctx), t, &TrackParams::default());
            ctx.track = Some(next.clone());
            if next.state == TrackState::Lost {
                stop(ctx);
                ctx.bb.set("lost_at", Value::Float(t));
                ctx.log("target_lost", &track_fields(&next));
                return Status::Failure;
            }
            if ticks % TRACE_EVERY_TICKS == 0 {
                ctx.log("track", &track_fields(&next));
            }
            ticks += 1;
            if next.last_update == t {
                history.push((t, next.position));
                history.retain(|(s, _)| t - s <= 1.0 + 1e-9);
                if let (Some(a), Some(b)) = (history.first(), history.last()) {
                    if b.0 > a.0 {
                        ctx.bb.set("track_vel", Value::Point(P2::from((b.1 - a.1) / (b.0 - a.0))));
                    }
                }
            }

            let me = ctx.pose().position();
            let d = (next.position - me).norm();
            let anchor = *still.get_or_insert((t, next.position));
            if (next.position - anchor.1).norm() > STILL_RADIUS {
                still = Some((t, next.position));
            } else if t - anchor.0 >= ARRIVE_STILL_S && d <= FOLLOW_DISTANCE + FOLLOW_BAND {
                stop(ctx);
                return Status::Success;
            }

            if d <= FOLLOW_DISTANCE + FOLLOW_BAND {
                follower = None;
                face(ctx, next.position);
                return Status::Running;
            }
            if follower.is_none() || since_plan >= REPLAN_TICKS {
                since_plan = 0;
                let dir = (next.position - me) / d;
                let goal = next.position - dir * FOLLOW_DISTANCE;
                let nav = ctx.nav();
                follower = plan_route(&ctx.world, &me, &goal, &nav).ok().map(|mut wps| {
                    if let Some(last) = wps.last_mut() {
                        last.heading = Some(dir.y.atan2(dir.x));
                    }
                    WaypointFollower::new(wps, nav)
                });
            }
            since_plan += 1;
            match follower.as_mut().map(|f| f.tick(&ctx.world, ctx.dt())) {
                Some(FollowStatus::Running(cmd)) => ctx.command(cmd),
                _ => {
                    follower = None;
                    face(ctx, next.position);
                }
            }
            Status::Running
        })
    })
}

/// Where the lost operator should be by now, walking on at their last speed.
fn predicted(ctx: &Ctx) -> Option<P2> {
    let track = ctx.track.as_ref()?;
    let v = ctx.bb.get_point("track_vel").map(|p| p.coords).unwrap_or(V2::zeros());
    let dt = (ctx.world.clock - track.last_update).clamp(0.0, PREDICT_HORIZON_S);
    Some(track.position + v * dt)
}

/// Trace annotation: the first frame in which the operator is in view again.
fn note_visible(ctx: &mut Ctx, skeletons: &[Skeleton]) {
    if ctx.bb.contains("visible_logged") || !skeletons.iter().any(|s| s.person_id == OPERATOR) {
        return;
    }
    ctx.bb.set("visible_logged", Value::Bool(true));
    ctx.log("target_visible", &[]);
}

fn reacquire(ctx: &mut Ctx, s: &Skeleton, method: &str) {
    let at = legs_near(ctx, s.torso.xy());
    let t = ctx.world.clock;
    let lost_for = t - ctx.bb.get_f64("lost_at").unwrap_or(t);
    if let Some(track) = ctx.track.as_mut() {
        track.reacquire(at, t);
    }
    ctx.bb.remove("visible_logged");
    ctx.bb.remove("track_vel");
    ctx.log(
        "reacquired",
        &[("method", method.into()), ("person", s.person_id.clone()), ("lost_for", fmt2(lost_for)), ("x", fmt2(at.x)), ("y", fmt2(at.y))],
    );
}

/// Compares every visible torso against the target photo each frame.
fn reid_by_color() -> Node<Ctx> {
    Node::leaf("reid_color", || {
        Box::new(move |ctx: &mut Ctx| {
            let Some(target) = ctx.track.as_ref().map(|t| t.target_histogram.clone()) else { return Status::Failure };
            let skeletons = skeleton_detect(&ctx.world);
            note_visible(ctx, &skeletons);
            let me = ctx.pose().position();
            let cands: Vec<ReidCandidate> = skeletons
                .iter()
                .enumerate()
                .filter_map(|(k, s)| {
                    Some(ReidCandidate { id: k.to_string(), histogram: histogram(s)?, distance: (s.torso.xy() - me).norm() })
                })
                .collect();
            let threshold = ctx.param_or("reid_threshold", 0.6);
            if let Some(k) = reidentify(&target, &cands, threshold).and_then(|k| k.parse::<usize>().ok()) {
                reacquire(ctx, &skeletons[k], "color");
                return Status::Success;
            }
            let lost_at = ctx.bb.get_f64("lost_at").unwrap_or(ctx.world.clock);
            if ctx.world.clock - lost_at >= REID_PATIENCE_S {
                ctx.log("reid_failed", &[("candidates", cands.len().to_string())]);
                stop(ctx);
                return Status::Failure;
            }
            match predicted(ctx) {
                Some(p) => face(ctx, p),
                None => stop(ctx),
            }
            Status::Running
        })
    })
}

/// Asks the operator to wave and takes the closest person seen waving.
fn reid_by_wave() -> Node<Ctx> {
    Node::leaf("reid_wave", || {
        let mut asked: Option<f64> = None;
        // Per-person wrist/shoulder history over consecutive frames.
        let mut frames: BTreeMap<String, Vec<WaveFrame>> = BTreeMap::new();
        Box::new(move |ctx: &mut Ctx| {
            let t = ctx.world.clock;
            let t0 = *asked.get_or_insert_with(|| {
                ctx.log("wave_requested", &[]);
                t
            });
            stop(ctx);
            let skeletons = skeleton_detect(&ctx.world);
            note_visible(ctx, &skeletons);
            frames.retain(|id, _| skeletons.iter().any(|s| &s.person_id == id));
            for s in &skeletons {
                frames.entry(s.person_id.clone()).or_default().push(WaveFrame { shoulder: s.shoulder, wrist: s.wrist });
            }
            let me = ctx.pose().position();
            let dt = ctx.dt();
            let waving: Vec<&Skeleton> = skeletons
                .iter()
                .filter(|s| frames.get(&s.person_id).is_some_and(|h| detect_wave(h, dt, &WaveParams::default())))
                .collect();
            for s in &waving {
                ctx.log("wave_seen", &[("person", s.person_id.clone()), ("distance", fmt2((s.torso.xy() - me).norm()))]);
            }
            if let Some(s) = waving.into_iter().min_by(|a, b| (a.torso.xy() - me).norm().total_cmp(&(b.torso.xy() - me).norm())) {
                let s = s.clone();
                reacquire(ctx, &s, "wave");
                return Status::Success;
            }
            if t - t0 >= WAVE_WAIT_S {
                ctx.log("wave_not_seen", &[]);
                return Status::Failure;
            }
            Status::Running
        })
    })
}

fn put_down_bag() -> Node<Ctx> {
    Node::sequence(
        "put_down_bag",
        vec![
            arm_to("lower_bag", arm_fn(|_| lift_for_hand_down(0.35).map(ArmJoints::hand_down))),
            grip("release_bag", false),
        ],
    )
}

pub fn build(_ctx: &mut Ctx) -> Result<Node<Ctx>, TaskError> {
    let keep_operator = Node::retry(
        MAX_LOSSES,
        Node::sequence(
            "follow_cycle",
            vec![
                Node::selector(
                    "have_target",
                    vec![
                        Node::condition("tracking", |ctx: &Ctx| ctx.track.as_ref().is_some_and(|t| t.state == TrackState::Tracking)),
                        reid_by_color(),
                        reid_by_wave(),
                    ],
                ),
                follow(),
            ],
        ),
    );
    Ok(Node::sequence(
        "luggage",
        vec![
            receive_bag(),
            arm_to("carry_bag", arm_fn(|_| lift_for_hand_down(CARRY_TCP).map(ArmJoints::hand_down))),
            look("look_level", 0.0, 0.0),
            set_target(),
            keep_operator,
            put_down_bag(),
            emit("luggage_delivered", |ctx| {
                let p = ctx.track.as_ref().map(|t| t.position).unwrap_or(P2::origin());
                vec![("x", fmt2(p.x)), ("y", fmt2(p.y))]
            }),
        ],
    ))
}
