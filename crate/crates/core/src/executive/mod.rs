//! Behavior-tree executive: the tick loop, skills and the task scripts.

pub mod blackboard;
pub mod bt;
pub mod context;
pub mod grasping;
pub mod report;
pub mod skills;
pub mod tasks;

pub use blackboard::{Blackboard, BlackboardError, Value};
pub use bt::{BtError, Node, Status, Tree};
pub use context::{Task, TaskConfig, TaskContext, TaskError};
pub use report::{score_events, score_task, ReportError, Rubric, TaskReport, TraceEvent};

use context::fmt2;
use crate::sim::World;

/// Result of a run plus the final context, for inspection and rendering.
pub struct TaskRun {
    pub report: TaskReport,
    pub ctx: TaskContext,
}

/// Runs `task` to success, failure or its time limit.
pub fn run_task(task: Task, world: World, cfg: &TaskConfig, seed: u64) -> Result<TaskReport, TaskError> {
    run_task_full(task, world, cfg, seed).map(|r| r.report)
}

pub fn run_task_full(task: Task, world: World, cfg: &TaskConfig, seed: u64) -> Result<TaskRun, TaskError> {
    cfg.validate()?;
    tasks::check_entities(task, &world)?;
    let limit = cfg.limit.unwrap_or(task.default_limit());
    let mut ctx = TaskContext::new(world.with_seed(seed), cfg.clone(), seed);
    let mut tree = Tree::new(tasks::build(task, &mut ctx)?)?;
    let t0 = ctx.world.clock;
    ctx.log("task_start", &[("task", task.name().into()), ("limit", fmt2(limit)), ("seed", seed.to_string())]);
    ctx.map_scan();
    let success = loop {
        match tree.tick(&mut ctx) {
            Status::Success => break true,
            Status::Failure => break false,
            Status::Running => {
                if ctx.world.clock - t0 + ctx.dt() > limit + 1e-9 {
                    ctx.log("timeout", &[("limit", fmt2(limit))]);
                    break false;
                }
                ctx.advance();
            }
        }
    };
    let rubric = cfg.rubric(task);
    let elapsed = ctx.world.clock - t0;
    let score = score_events(&ctx.events, &rubric);
    ctx.log("task_end", &[("success", success.to_string()), ("elapsed", fmt2(elapsed)), ("score", format!("{score}"))]);
    let report = TaskReport {
        task: task.name().to_string(),
        success,
        score,
        elapsed: fmt2(elapsed).parse().expect("formatted float"),
        events: ctx.events.clone(),
    };
    Ok(TaskRun { report, ctx })
}
