//! Grid search, first-success planning races and base navigation.

pub mod astar;
pub mod navigation;
pub mod race;

pub use astar::{astar_plan, Cell, Cost, Grid, GridPath};
pub use navigation::{follow_waypoints, plan_route, FollowStatus, NavConfig, NavError, Waypoint, WaypointFollower, WorldGrid};
pub use race::{completion_order, plan_race, CancelToken, PlanRequest, RaceError, RaceMode, RaceOutcome, WorkerStatus};
