use homesim::executive::{run_task, Task, TaskConfig};
use homesim::sim::arena::load_arena;

fn arena(name: &str) -> homesim::sim::World {
    let path = format!("{}/scenarios/{name}.arena", env!("CARGO_MANIFEST_DIR"));
    load_arena(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn garbage_reference_run() {
    let r = run_task(Task::Garbage, arena("garbage"), &TaskConfig::default(), 7).unwrap();
    assert!(r.success);
    assert_eq!(r.count("bag_deposited"), 2);
    assert_eq!(r.count("lid_removed"), 2);
}

#[test]
fn groceries_reference_run() {
    let cfg = TaskConfig { deterministic_race: true, ..TaskConfig::default() };
    let r = run_task(Task::Groceries, arena("groceries"), &cfg, 7).unwrap();
    assert!(r.success);
    assert_eq!(r.count("object_placed"), 2);
    assert_eq!(r.count("table_found"), 1);
}

#[test]
fn drinks_reference_run() {
    let cfg = TaskConfig { deterministic_race: true, ..TaskConfig::default() };
    let r = run_task(Task::Drinks, arena("drinks"), &cfg, 7).unwrap();
    assert!(r.success);
    assert_eq!(r.count("drink_delivered"), 1);
    assert_eq!(r.count("unavailable_reported"), 1);
}

#[test]
fn luggage_reference_run() {
    let r = run_task(Task::Luggage, arena("luggage"), &TaskConfig::default(), 7).unwrap();
    assert!(r.success);
    assert_eq!(r.count("reacquired"), 1);
    assert_eq!(r.count("luggage_delivered"), 1);
}

#[test]
fn luggage_ambiguous_run() {
    let r = run_task(Task::Luggage, arena("luggage_ambiguous"), &TaskConfig::default(), 7).unwrap();
    assert!(r.success);
    assert_eq!(r.count("reid_failed"), 1);
    assert_eq!(r.count("luggage_delivered"), 1);
}

#[test]
fn restaurant_reference_run() {
    let r = run_task(Task::Restaurant, arena("restaurant"), &TaskConfig::default(), 7).unwrap();
    assert!(r.success);
    assert_eq!(r.count("order_delivered"), 1);
}

#[test]
fn clean_table_reference_run() {
    let r = run_task(Task::CleanTable, arena("clean_table"), &TaskConfig::default(), 7).unwrap();
    assert!(r.success);
    assert_eq!(r.count("object_placed"), 2);
    assert_eq!(r.count("dock_aligned"), 2);
}

#[test]
fn breakfast_reference_run() {
    let r = run_task(Task::Breakfast, arena("breakfast"), &TaskConfig::default(), 7).unwrap();
    assert!(r.success);
    assert_eq!(r.count("bowl_placed"), 1);
    assert_eq!(r.count("cereal_grasped"), 1);
    assert_eq!(r.count("pour_skipped"), 1);
}
