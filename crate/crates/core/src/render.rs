//! Binary graymaps (PGM, `P5`) of occupancy: free 255, unknown 128,
//! occupied 0. The top image row is the largest `y`.

use crate::geom::P2;
use crate::occupancy::{CellState, OccupancyOctree};
use crate::sim::World;

pub const FREE: u8 = 255;
pub const UNKNOWN: u8 = 128;
pub const OCCUPIED: u8 = 0;

fn pgm(width: usize, height: usize, px: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height);
    for j in (0..height).rev() {
        for i in 0..width {
            out.push(px(i, j));
        }
    }
    out
}

pub fn state_px(s: CellState) -> u8 {
    match s {
        CellState::Free => FREE,
        CellState::Unknown => UNKNOWN,
        CellState::Occupied => OCCUPIED,
    }
}

/// Horizontal slice of the octree at height `z`. A height outside the tree
/// renders as all unknown.
pub fn octree_slice(map: &OccupancyOctree, z: f64) -> Vec<u8> {
    let n = map.cells_per_side() as usize;
    match map.slice(z) {
        Some(cells) => pgm(n, n, |i, j| state_px(cells[j * n + i])),
        None => pgm(n, n, |_, _| UNKNOWN),
    }
}

/// Ground-truth footprint of everything solid at height `z`, sampled at
/// cell centers. Nothing here is unknown.
pub fn world_slice(world: &World, z: f64, resolution: f64) -> Vec<u8> {
    let w = (world.width / resolution).ceil() as usize;
    let h = (world.height / resolution).ceil() as usize;
    let boxes: Vec<_> = world.solid_boxes().filter(|b| b.min.z <= z && z <= b.max.z).map(|b| b.footprint()).collect();
    pgm(w, h, |i, j| {
        let p = P2::new((i as f64 + 0.5) * resolution, (j as f64 + 0.5) * resolution);
        if boxes.iter().any(|r| r.contains(&p)) {
            OCCUPIED
        } else {
            FREE
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::P3;
    use crate::occupancy::OctreeConfig;
    use crate::sim::arena::load_arena;

    fn body(img: &[u8]) -> &[u8] {
        let mut newlines = 0;
        let start = img.iter().position(|&b| {
            newlines += (b == b'\n') as usize;
            newlines == 3
        });
        &img[start.unwrap() + 1..]
    }

    #[test]
    fn empty_map_is_uniform_unknown() {
        let m = OccupancyOctree::new(P3::origin(), 4, OctreeConfig::default());
        let img = octree_slice(&m, 0.1);
        assert!(img.starts_with(b"P5\n16 16\n255\n"));
        assert_eq!(body(&img).len(), 256);
        assert!(body(&img).iter().all(|&b| b == UNKNOWN));
    }

    #[test]
    fn slice_shows_hits_and_free_ray() {
        let cfg = OctreeConfig { resolution: 0.1, ..OctreeConfig::default() };
        let mut m = OccupancyOctree::new(P3::origin(), 4, cfg);
        m.integrate_scan(&P3::new(0.05, 0.05, 0.05), &[P3::new(1.05, 0.05, 0.05)]);
        let img = octree_slice(&m, 0.05);
        let b = body(&img);
        // Bottom image row is j = 0.
        let row = &b[15 * 16..];
        assert_eq!(row[0], FREE);
        assert_eq!(row[9], FREE);
        assert_eq!(row[10], OCCUPIED);
        assert_eq!(row[11], UNKNOWN);
    }

    #[test]
    fn walls_render_as_occupied_border() {
        let w = load_arena("arena 2 1\nwall 0 0 2 0 1.0\nwall 0 1 2 1 1.0\nwall 0 0 0 1 1.0\nwall 2 0 2 1 1.0\nrobot 1 0.5 0\n").unwrap();
        let img = world_slice(&w, 0.2, 0.1);
        assert!(img.starts_with(b"P5\n20 10\n255\n"));
        let b = body(&img);
        assert_eq!(b[0], OCCUPIED);
        assert_eq!(b[5 * 20 + 10], FREE);
        assert_eq!(b[5 * 20 + 19], OCCUPIED);
        assert_eq!(world_slice(&w, 0.2, 0.1), img);
    }
}
