//! Household service-robot simulator and algorithms library.

pub mod geom;
pub mod noise;
pub mod sim;
pub mod occupancy;
pub mod object_cloud;
pub mod manipulation;
pub mod planner;
pub mod mapless;
pub mod tracking;
pub mod semantics;
pub mod executive;
pub mod render;
