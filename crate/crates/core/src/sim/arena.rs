//! Line-oriented arena documents.
//!
//! ```text
//! arena W H
//! wall x1 y1 x2 y2 h
//! door <name> x1 y1 x2 y2 h [open_at=T]
//! furniture <name> x y z dx dy dz
//! object <class> x y z dx dy dz [category=<c>] [graspable] [sticky]
//! person <id> color R G B [drink] [wave t0 t1 ...] [waypoints t,x,y ...]
//! robot x y theta
//! zone <name> x y r
//! menu <item> ...
//! say <person> <text ...>
//! param <key> <value>
//! ```
//!
//! Box coordinates give the footprint center and the bottom height. Walls and
//! doors are axis-aligned segments thickened to [`WALL_THICKNESS`]. `#` starts
//! a comment.

use thiserror::Error;

use super::{Door, ObjectId, RobotState, SimObject, SimPerson, StaticBox, TimedWaypoint, World, Zone};
use crate::geom::{Aabb, Pose2, P3};

pub const WALL_THICKNESS: f64 = 0.1;
const OVERLAP_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArenaError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Semantic { line: usize, msg: String },
}

fn syntax(line: usize, msg: impl Into<String>) -> ArenaError {
    ArenaError::Syntax { line, msg: msg.into() }
}

fn semantic(line: usize, msg: impl Into<String>) -> ArenaError {
    ArenaError::Semantic { line, msg: msg.into() }
}

fn num(line: usize, tok: Option<&str>, what: &str) -> Result<f64, ArenaError> {
    let tok = tok.ok_or_else(|| syntax(line, format!("missing {what}")))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| syntax(line, format!("expected number for {what}, got `{tok}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(syntax(line, format!("non-finite {what}")))
    }
}

fn word<'a>(line: usize, tok: Option<&'a str>, what: &str) -> Result<&'a str, ArenaError> {
    tok.ok_or_else(|| syntax(line, format!("missing {what}")))
}

fn segment_box(line: usize, x1: f64, y1: f64, x2: f64, y2: f64, h: f64) -> Result<Aabb, ArenaError> {
    if h <= 0.0 {
        return Err(semantic(line, "segment height must be positive"));
    }
    let t = WALL_THICKNESS / 2.0;
    if (y1 - y2).abs() < 1e-12 {
        Ok(Aabb::new(P3::new(x1.min(x2), y1 - t, 0.0), P3::new(x1.max(x2), y1 + t, h)))
    } else if (x1 - x2).abs() < 1e-12 {
        Ok(Aabb::new(P3::new(x1 - t, y1.min(y2), 0.0), P3::new(x1 + t, y1.max(y2), h)))
    } else {
        Err(semantic(line, "walls and doors must be axis-aligned"))
    }
}

fn footprint_box(line: usize, v: [f64; 6]) -> Result<Aabb, ArenaError> {
    let [x, y, z, dx, dy, dz] = v;
    if dx <= 0.0 || dy <= 0.0 || dz <= 0.0 {
        return Err(semantic(line, "box extents must be strictly positive"));
    }
    Ok(Aabb::new(
        P3::new(x - dx / 2.0, y - dy / 2.0, z),
        P3::new(x + dx / 2.0, y + dy / 2.0, z + dz),
    ))
}

fn six(line: usize, toks: &mut std::str::SplitWhitespace<'_>) -> Result<[f64; 6], ArenaError> {
    let names = ["x", "y", "z", "dx", "dy", "dz"];
    let mut out = [0.0; 6];
    for (o, n) in out.iter_mut().zip(names) {
        *o = num(line, toks.next(), n)?;
    }
    Ok(out)
}

/// Parses an arena document into a [`World`] with clock 0.
pub fn load_arena(text: &str) -> Result<World, ArenaError> {
    let mut bounds: Option<(f64, f64)> = None;
    let mut world = World::empty(0.0, 0.0);
    let mut object_lines = Vec::new();
    let mut furniture_lines = Vec::new();
    let mut robot_set = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let directive = toks.next().unwrap_or_default();
        match directive {
            "arena" => {
                if bounds.is_some() {
                    return Err(semantic(line, "duplicate arena directive"));
                }
                let w = num(line, toks.next(), "width")?;
                let h = num(line, toks.next(), "height")?;
                if w <= 0.0 || h <= 0.0 {
                    return Err(semantic(line, "arena dimensions must be positive"));
                }
                bounds = Some((w, h));
            }
            "wall" => {
                let v: Vec<f64> = (0..5)
                    .map(|i| num(line, toks.next(), ["x1", "y1", "x2", "y2", "h"][i]))
                    .collect::<Result<_, _>>()?;
                let aabb = segment_box(line, v[0], v[1], v[2], v[3], v[4])?;
                let name = format!("wall{}", world.static_boxes.iter().filter(|b| b.name.starts_with("wall")).count());
                world.static_boxes.push(StaticBox { name, aabb });
            }
            "door" => {
                let name = word(line, toks.next(), "door name")?.to_string();
                let v: Vec<f64> = (0..5)
                    .map(|i| num(line, toks.next(), ["x1", "y1", "x2", "y2", "h"][i]))
                    .collect::<Result<_, _>>()?;
                let aabb = segment_box(line, v[0], v[1], v[2], v[3], v[4])?;
                let mut open_at = None;
                for t in toks.by_ref() {
                    match t.strip_prefix("open_at=") {
                        Some(v) => open_at = Some(num(line, Some(v), "open_at")?),
                        None => return Err(syntax(line, format!("unexpected token `{t}`"))),
                    }
                }
                world.doors.push(Door { name, aabb, open_at });
            }
            "furniture" => {
                let name = word(line, toks.next(), "furniture name")?.to_string();
                let aabb = footprint_box(line, six(line, &mut toks)?)?;
                furniture_lines.push((line, world.static_boxes.len()));
                world.static_boxes.push(StaticBox { name, aabb });
            }
            "object" => {
                let class_label = word(line, toks.next(), "object class")?.to_string();
                let aabb = footprint_box(line, six(line, &mut toks)?)?;
                let mut category = None;
                let mut graspable = false;
                let mut sticky = false;
                for t in toks.by_ref() {
                    if let Some(c) = t.strip_prefix("category=") {
                        category = Some(c.to_string());
                    } else if t == "graspable" {
                        graspable = true;
                    } else if t == "sticky" {
                        sticky = true;
                    } else {
                        return Err(syntax(line, format!("unexpected token `{t}`")));
                    }
                }
                let id = ObjectId(world.objects.len() as u32);
                object_lines.push(line);
                world.objects.push(SimObject { id, class_label, aabb, category, graspable, sticky });
            }
            "person" => world.people.push(parse_person(line, &mut toks)?),
            "robot" => {
                let x = num(line, toks.next(), "x")?;
                let y = num(line, toks.next(), "y")?;
                let th = num(line, toks.next(), "theta")?;
                world.robot = RobotState::at(Pose2::new(x, y, th));
                robot_set = true;
            }
            "zone" => {
                let name = word(line, toks.next(), "zone name")?.to_string();
                let x = num(line, toks.next(), "x")?;
                let y = num(line, toks.next(), "y")?;
                let r = num(line, toks.next(), "r")?;
                if r <= 0.0 {
                    return Err(semantic(line, "zone radius must be positive"));
                }
                world.zones.insert(name, Zone { x, y, r });
            }
            "menu" => world.menu.extend(toks.by_ref().map(str::to_string)),
            "say" => {
                let who = word(line, toks.next(), "speaker")?.to_string();
                let text: Vec<&str> = toks.by_ref().collect();
                if text.is_empty() {
                    return Err(syntax(line, "empty utterance"));
                }
                world.dialogue.entry(who).or_default().push(text.join(" "));
            }
            "param" => {
                let k = word(line, toks.next(), "param key")?.to_string();
                let v = word(line, toks.next(), "param value")?.to_string();
                world.params.insert(k, v);
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
        if let Some(extra) = toks.next() {
            return Err(syntax(line, format!("unexpected token `{extra}`")));
        }
    }

    let (w, h) = bounds.ok_or_else(|| semantic(0, "missing arena directive"))?;
    world.width = w;
    world.height = h;
    if !robot_set {
        world.robot = RobotState::at(Pose2::new(w / 2.0, h / 2.0, 0.0));
    }

    for (obj, &line) in world.objects.iter().zip(&object_lines) {
        let c = obj.aabb.center();
        if !(0.0..=w).contains(&c.x) || !(0.0..=h).contains(&c.y) {
            return Err(semantic(line, format!("object `{}` lies outside the arena", obj.class_label)));
        }
    }
    let furniture: Vec<(usize, &StaticBox)> =
        furniture_lines.iter().map(|&(line, i)| (line, &world.static_boxes[i])).collect();
    for (i, (_, a)) in furniture.iter().enumerate() {
        for (line, b) in furniture.iter().skip(i + 1) {
            if a.aabb.overlap_volume(&b.aabb) > OVERLAP_EPS {
                return Err(semantic(*line, format!("furniture `{}` overlaps `{}`", b.name, a.name)));
            }
        }
    }
    for p in &world.people {
        for wp in &p.trajectory {
            if !(0.0..=w).contains(&wp.x) || !(0.0..=h).contains(&wp.y) {
                return Err(semantic(0, format!("person `{}` waypoint outside the arena", p.id)));
            }
        }
    }
    Ok(world)
}

fn parse_person(line: usize, toks: &mut std::str::SplitWhitespace<'_>) -> Result<SimPerson, ArenaError> {
    let id = word(line, toks.next(), "person id")?.to_string();
    if word(line, toks.next(), "color keyword")? != "color" {
        return Err(syntax(line, "expected `color R G B` after person id"));
    }
    let mut rgb = [0u8; 3];
    for c in rgb.iter_mut() {
        let v = num(line, toks.next(), "color channel")?;
        if !(0.0..=255.0).contains(&v) {
            return Err(semantic(line, "color channel outside 0..=255"));
        }
        *c = v as u8;
    }
    let mut person = SimPerson {
        id,
        trajectory: Vec::new(),
        torso_color: rgb,
        wave_script: Vec::new(),
        has_drink: false,
    };
    #[derive(PartialEq)]
    enum Mode {
        None,
        Wave,
        Waypoints,
    }
    let mut mode = Mode::None;
    let mut pending: Option<f64> = None;
    for t in toks.by_ref() {
        match t {
            "drink" => {
                person.has_drink = true;
                mode = Mode::None;
            }
            "wave" => mode = Mode::Wave,
            "waypoints" => mode = Mode::Waypoints,
            _ => match mode {
                Mode::Wave => {
                    let v = num(line, Some(t), "wave time")?;
                    match pending.take() {
                        None => pending = Some(v),
                        Some(a) => {
                            if v < a {
                                return Err(semantic(line, "wave interval ends before it starts"));
                            }
                            person.wave_script.push((a, v));
                        }
                    }
                }
                Mode::Waypoints => {
                    let parts: Vec<&str> = t.split(',').collect();
                    if parts.len() != 3 {
                        return Err(syntax(line, format!("waypoint `{t}` is not t,x,y")));
                    }
                    let wp = TimedWaypoint {
                        t: num(line, Some(parts[0]), "waypoint t")?,
                        x: num(line, Some(parts[1]), "waypoint x")?,
                        y: num(line, Some(parts[2]), "waypoint y")?,
                    };
                    if person.trajectory.last().is_some_and(|p| p.t >= wp.t) {
                        return Err(semantic(line, "waypoint times must be strictly increasing"));
                    }
                    person.trajectory.push(wp);
                }
                Mode::None => return Err(syntax(line, format!("unexpected token `{t}`"))),
            },
        }
    }
    if pending.is_some() {
        return Err(syntax(line, "wave interval missing its end time"));
    }
    if person.trajectory.is_empty() {
        return Err(semantic(line, format!("person `{}` has no waypoints", person.id)));
    }
    Ok(person)
}
