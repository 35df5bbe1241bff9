//! Browser bindings: run a bundled scenario, plan on a hand-drawn grid and
//! try the rhyme-based order correction.

use wasm_bindgen::prelude::*;

use homesim::executive::{run_task_full, Task, TaskConfig};
use homesim::planner::astar::{astar_plan, Grid};
use homesim::render::octree_slice;
use homesim::semantics::rhyme_correct;
use homesim::sim::arena::load_arena;

const SCENARIOS: [(&str, &str); 7] = [
    ("garbage", include_str!("../../core/scenarios/garbage.arena")),
    ("groceries", include_str!("../../core/scenarios/groceries.arena")),
    ("drinks", include_str!("../../core/scenarios/drinks.arena")),
    ("luggage", include_str!("../../core/scenarios/luggage.arena")),
    ("restaurant", include_str!("../../core/scenarios/restaurant.arena")),
    ("clean_table", include_str!("../../core/scenarios/clean_table.arena")),
    ("breakfast", include_str!("../../core/scenarios/breakfast.arena")),
];

pub fn task_names() -> Vec<String> {
    SCENARIOS.iter().map(|(n, _)| n.to_string()).collect()
}

/// Result of one bundled scenario run.
#[wasm_bindgen]
pub struct ScenarioRun {
    trace: String,
    summary: String,
    map_size: usize,
    map: Vec<u8>,
}

#[wasm_bindgen]
impl ScenarioRun {
    #[wasm_bindgen(getter)]
    pub fn trace(&self) -> String {
        self.trace.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.summary.clone()
    }

    /// Side of the square map slice in cells.
    #[wasm_bindgen(getter)]
    pub fn map_size(&self) -> usize {
        self.map_size
    }

    /// Map slice at scanner height, row-major, top row first:
    /// 0 occupied, 128 unknown, 255 free.
    #[wasm_bindgen(getter)]
    pub fn map(&self) -> Vec<u8> {
        self.map.clone()
    }
}

/// Runs the bundled scenario for `task`. Races are always resolved in the
/// fixed order, there are no threads in the browser.
#[wasm_bindgen]
pub fn run_scenario(task: &str, seed: u32) -> Result<ScenarioRun, JsError> {
    let text = SCENARIOS
        .iter()
        .find(|(n, _)| *n == task)
        .map(|(_, t)| *t)
        .ok_or_else(|| JsError::new(&format!("unknown task `{task}`; valid: {}", task_names().join(", "))))?;
    let t: Task = task.parse().map_err(|e: homesim::executive::TaskError| JsError::new(&e.to_string()))?;
    let world = load_arena(text).map_err(|e| JsError::new(&e.to_string()))?;
    let cfg = TaskConfig { deterministic_race: true, ..TaskConfig::default() };
    let run = run_task_full(t, world, &cfg, seed as u64).map_err(|e| JsError::new(&e.to_string()))?;
    let img = octree_slice(&run.ctx.map, run.ctx.world.config.scanner_height);
    let n = run.ctx.map.cells_per_side() as usize;
    Ok(ScenarioRun {
        trace: run.report.trace_text(),
        summary: run.report.summary(),
        map_size: n,
        map: img[img.len() - n * n..].to_vec(),
    })
}

/// A* over a `width` x `height` grid where nonzero `blocked` bytes are
/// walls. Returns the path as flat `x, y` pairs, empty if there is none.
#[wasm_bindgen]
pub fn plan_grid(width: usize, height: usize, blocked: &[u8], sx: usize, sy: usize, gx: usize, gy: usize) -> Vec<u32> {
    if blocked.len() != width * height {
        return Vec::new();
    }
    let grid = Grid::from_fn(width, height, |(x, y)| blocked[y * width + x] != 0);
    astar_plan(&grid, (sx, sy), (gx, gy))
        .map(|p| p.cells.iter().flat_map(|&(x, y)| [x as u32, y as u32]).collect())
        .unwrap_or_default()
}

/// Menu item a misheard word most likely meant, or an empty string when the
/// answer is unclear. `menu` is comma separated.
#[wasm_bindgen]
pub fn correct_order(heard: &str, menu: &str) -> String {
    let items: Vec<String> = menu.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    rhyme_correct(heard, &items).unwrap_or_default()
}
