//! Task scripts. Each builds a static tree over the shared skills.

mod breakfast;
mod clean_table;
mod drinks;
mod garbage;
mod groceries;
mod luggage;
mod restaurant;

use super::bt::Node;
use super::context::{Task, TaskContext, TaskError};
use crate::geom::{wrap_angle, Pose2, P2};
use crate::sim::World;

pub fn build(task: Task, ctx: &mut TaskContext) -> Result<Node<TaskContext>, TaskError> {
    match task {
        Task::Garbage => garbage::build(ctx),
        Task::Groceries => groceries::build(ctx),
        Task::Drinks => drinks::build(ctx),
        Task::Luggage => luggage::build(ctx),
        Task::Restaurant => restaurant::build(ctx),
        Task::CleanTable => clean_table::build(ctx),
        Task::Breakfast => breakfast::build(ctx),
    }
}

fn missing(what: impl Into<String>) -> TaskError {
    TaskError::MissingEntity(what.into())
}

fn need_zone(world: &World, name: &str) -> Result<(), TaskError> {
    world.zones.contains_key(name).then_some(()).ok_or_else(|| missing(format!("zone `{name}`")))
}

fn need_furniture(world: &World, name: &str) -> Result<(), TaskError> {
    world.furniture(name).map(|_| ()).ok_or_else(|| missing(format!("furniture `{name}`")))
}

fn need_object(world: &World, class: &str) -> Result<(), TaskError> {
    world.objects.iter().any(|o| o.class_label == class).then_some(()).ok_or_else(|| missing(format!("object `{class}`")))
}

fn need_person(world: &World, id: &str) -> Result<(), TaskError> {
    world.person(id).map(|_| ()).ok_or_else(|| missing(format!("person `{id}`")))
}

/// Entities a task script relies on; checked before the run starts.
pub fn check_entities(task: Task, world: &World) -> Result<(), TaskError> {
    match task {
        Task::Garbage => {
            if !world.zones.keys().any(|k| k.starts_with("can_")) {
                return Err(missing("zone `can_*`"));
            }
            need_zone(world, "collection")?;
            need_object(world, "bag")
        }
        Task::Groceries => {
            need_zone(world, "pantry")?;
            if !world.static_boxes.iter().any(|b| b.name.starts_with("shelf_")) {
                return Err(missing("furniture `shelf_*`"));
            }
            world.param_f64("table_height").map(|_| ()).ok_or_else(|| missing("param `table_height`"))
        }
        Task::Drinks => {
            need_zone(world, "bar")?;
            if world.menu.is_empty() {
                return Err(missing("menu"));
            }
            if world.people.is_empty() {
                return Err(missing("person"));
            }
            Ok(())
        }
        Task::Luggage => need_person(world, "operator"),
        Task::Restaurant => {
            need_person(world, "bartender")?;
            if world.menu.is_empty() {
                return Err(missing("menu"));
            }
            Ok(())
        }
        Task::CleanTable => {
            need_furniture(world, "table")?;
            need_furniture(world, "dishwasher")?;
            need_zone(world, "sink")
        }
        Task::Breakfast => {
            need_furniture(world, "table")?;
            need_furniture(world, "counter")?;
            need_object(world, "bowl")?;
            need_object(world, "cereal")
        }
    }
}

/// Base pose that puts a point `reach` ahead of the robot onto `target`,
/// choosing among the four axis headings plus the direct one from `from`.
/// Prefers the free pose closest to `from`.
pub(crate) fn facing_pose(world: &World, target: P2, reach: f64, from: P2, margin: f64) -> Option<Pose2> {
    let direct = (target - from).y.atan2((target - from).x);
    let mut cands: Vec<f64> = (0..4).map(|k| wrap_angle(k as f64 * std::f64::consts::FRAC_PI_2)).collect();
    cands.push(direct);
    cands
        .into_iter()
        .map(|h| Pose2::new(target.x - reach * h.cos(), target.y - reach * h.sin(), h))
        .filter(|p| {
            let q = p.position();
            q.x > 0.0 && q.y > 0.0 && q.x < world.width && q.y < world.height
                && !world.footprint_blocked(&q, world.config.robot_radius + margin)
        })
        .min_by(|a, b| (a.position() - from).norm().total_cmp(&(b.position() - from).norm()))
}
