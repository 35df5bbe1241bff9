//! Scenario runner: load an arena, run one task, write the trace, a summary
//! and optional map renders.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::Parser;
use homesim::executive::{run_task_full, Task, TaskConfig};
use homesim::render::{octree_slice, world_slice};
use homesim::sim::arena::load_arena;

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_TASK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Cell size of the ground-truth render.
const TRUTH_RESOLUTION: f64 = 0.05;

#[derive(Debug, Clone, Parser)]
#[command(name = "homesim", about = "Run a household task scenario in the simulator")]
pub struct RunConfig {
    /// Arena description file.
    #[arg(long)]
    pub arena: PathBuf,
    /// Task to run.
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub seed: u64,
    /// Simulation step in seconds.
    #[arg(long)]
    pub dt: f64,
    /// Time limit in simulated seconds (task default if absent).
    #[arg(long)]
    pub limit: Option<f64>,
    /// Write the event trace here instead of standard output.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write a PGM slice of the built map at scanner height.
    #[arg(long)]
    pub render: Option<PathBuf>,
    /// Write a PGM of the arena's true obstacles at scanner height.
    #[arg(long)]
    pub render_truth: Option<PathBuf>,
    /// Resolve planner races in a fixed order.
    #[arg(long)]
    pub deterministic_race: bool,
    /// Skip grasp planning; always grasp from the top.
    #[arg(long)]
    pub simple_top_grasp: bool,
    /// Carry garbage bags below the scanner plane.
    #[arg(long)]
    pub carry_bag_low: bool,
}

/// Runs one scenario. Diagnostics go to `err`, trace and summary to `out`.
pub fn run(cfg: &RunConfig, out: &mut impl Write, err: &mut impl Write) -> i32 {
    match run_inner(cfg, out) {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_CONFIG
        }
    }
}

fn run_inner(cfg: &RunConfig, out: &mut impl Write) -> Result<i32, String> {
    let task: Task = cfg.task.parse().map_err(|_| format!("unknown task `{}`; valid tasks: {}", cfg.task, Task::names().join(", ")))?;
    let text = fs::read_to_string(&cfg.arena).map_err(|e| format!("cannot read arena {}: {e}", cfg.arena.display()))?;
    let world = load_arena(&text).map_err(|e| format!("{}: {e}", cfg.arena.display()))?;
    let task_cfg = TaskConfig {
        dt: cfg.dt,
        limit: cfg.limit,
        deterministic_race: cfg.deterministic_race,
        simple_top_grasp: cfg.simple_top_grasp,
        carry_bag_low: cfg.carry_bag_low,
        ..TaskConfig::default()
    };
    let truth = cfg.render_truth.as_ref().map(|p| (p, world_slice(&world, world.config.scanner_height, TRUTH_RESOLUTION)));
    let run = run_task_full(task, world, &task_cfg, cfg.seed).map_err(|e| e.to_string())?;

    let trace = run.report.trace_text();
    match &cfg.trace {
        Some(p) => fs::write(p, &trace).map_err(|e| format!("cannot write trace {}: {e}", p.display()))?,
        None => out.write_all(trace.as_bytes()).map_err(|e| e.to_string())?,
    }
    if let Some(p) = &cfg.render {
        let img = octree_slice(&run.ctx.map, run.ctx.world.config.scanner_height);
        fs::write(p, img).map_err(|e| format!("cannot write render {}: {e}", p.display()))?;
    }
    if let Some((p, img)) = truth {
        fs::write(p, img).map_err(|e| format!("cannot write render {}: {e}", p.display()))?;
    }
    out.write_all(run.report.summary().as_bytes()).map_err(|e| e.to_string())?;
    Ok(if run.report.success { EXIT_SUCCESS } else { EXIT_TASK_FAILED })
}
