//! Sparse octree of clamped log-odds occupancy.
//!
//! Leaves store the log-odds of a cube; a missing child is unseen space
//! (probability 0.5). When pruning is enabled, an inner node whose eight
//! children are leaves with identical values collapses into a single leaf.
//! Updates below such a leaf expand it again, so queries never observe the
//! difference.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::geom::{Aabb, P3, V3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OctreeError {
    #[error("point or key lies outside the octree bounds")]
    OutOfBounds,
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctreeConfig {
    pub resolution: f64,
    pub l_hit: f64,
    pub l_miss: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    pub prune: bool,
}

impl Default for OctreeConfig {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            l_hit: logit(0.7),
            l_miss: logit(0.4),
            clamp_min: logit(0.12),
            clamp_max: logit(0.97),
            prune: true,
        }
    }
}

impl OctreeConfig {
    /// One clamped update step; the scalar model the tree must reproduce.
    pub fn apply(&self, log_odds: f64, hit: bool) -> f64 {
        let inc = if hit { self.l_hit } else { self.l_miss };
        (log_odds + inc).clamp(self.clamp_min, self.clamp_max)
    }
}

/// Finest-level voxel index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelKey {
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl VoxelKey {
    pub const fn new(i: u32, j: u32, k: u32) -> Self {
        Self { i, j, k }
    }

    fn child_index(&self, level: u8) -> usize {
        let b = level - 1;
        (((self.i >> b) & 1) | (((self.j >> b) & 1) << 1) | (((self.k >> b) & 1) << 2)) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Inner(Box<[Option<Node>; 8]>),
}

fn empty_children() -> Box<[Option<Node>; 8]> {
    Box::new([None, None, None, None, None, None, None, None])
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyOctree {
    origin: P3,
    depth: u8,
    config: OctreeConfig,
    root: Option<Node>,
}

/// Query interface used by grasp filtering.
pub trait OccupancyQuery {
    fn resolution(&self) -> f64;
    /// Centers of finest voxels inside `region` with occupancy at least `threshold`.
    fn occupied_voxels_in(&self, region: &Aabb, threshold: f64) -> Vec<P3>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

impl OccupancyOctree {
    /// Cube of `2^depth` voxels per side with its minimum corner at `origin`.
    pub fn new(origin: P3, depth: u8, config: OctreeConfig) -> Self {
        assert!(depth >= 1 && depth <= 20, "unsupported octree depth");
        Self { origin, depth, config, root: None }
    }

    /// Smallest tree anchored at `min` that covers `max`.
    pub fn covering(min: P3, max: P3, config: OctreeConfig) -> Self {
        let span = (max - min).max() / config.resolution;
        let mut depth = 1u8;
        while ((1u64 << depth) as f64) < span {
            depth += 1;
        }
        Self::new(min, depth, config)
    }

    pub fn config(&self) -> &OctreeConfig {
        &self.config
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn cells_per_side(&self) -> u32 {
        1 << self.depth
    }

    pub fn bounds(&self) -> Aabb {
        let side = self.config.resolution * self.cells_per_side() as f64;
        Aabb::new(self.origin, self.origin + V3::repeat(side))
    }

    pub fn key_of(&self, p: &P3) -> Result<VoxelKey, OctreeError> {
        let n = self.cells_per_side() as f64;
        let r = self.config.resolution;
        let f = |v: f64, o: f64| -> Result<u32, OctreeError> {
            let c = ((v - o) / r).floor();
            if c.is_finite() && c >= 0.0 && c < n {
                Ok(c as u32)
            } else {
                Err(OctreeError::OutOfBounds)
            }
        };
        Ok(VoxelKey::new(f(p.x, self.origin.x)?, f(p.y, self.origin.y)?, f(p.z, self.origin.z)?))
    }

    pub fn key_in_bounds(&self, key: &VoxelKey) -> bool {
        let n = self.cells_per_side();
        key.i < n && key.j < n && key.k < n
    }

    pub fn center_of(&self, key: &VoxelKey) -> P3 {
        let r = self.config.resolution;
        self.origin + V3::new(key.i as f64 + 0.5, key.j as f64 + 0.5, key.k as f64 + 0.5) * r
    }

    /// Applies one hit or miss to a voxel.
    pub fn update_voxel(&mut self, key: VoxelKey, hit: bool) -> Result<(), OctreeError> {
        if !self.key_in_bounds(&key) {
            return Err(OctreeError::OutOfBounds);
        }
        let cfg = self.config;
        update_rec(&mut self.root, self.depth, &key, hit, &cfg);
        Ok(())
    }

    /// Stored log-odds of the leaf containing `key`; `None` when unseen.
    pub fn log_odds(&self, key: &VoxelKey) -> Option<f64> {
        let mut node = self.root.as_ref()?;
        let mut level = self.depth;
        loop {
            match node {
                Node::Leaf(v) => return Some(*v),
                Node::Inner(ch) => {
                    node = ch[key.child_index(level)].as_ref()?;
                    level -= 1;
                }
            }
        }
    }

    pub fn occupancy_key(&self, key: &VoxelKey) -> f64 {
        self.log_odds(key).map_or(0.5, logistic)
    }

    pub fn occupancy_at(&self, p: &P3) -> Result<f64, OctreeError> {
        Ok(self.occupancy_key(&self.key_of(p)?))
    }

    pub fn state(&self, key: &VoxelKey) -> CellState {
        match self.log_odds(key) {
            None => CellState::Unknown,
            Some(v) if v > 0.0 => CellState::Occupied,
            Some(_) => CellState::Free,
        }
    }

    /// Fuses one sweep of range returns. Voxels crossed on the way to an
    /// endpoint get a miss, endpoint voxels get a hit, each voxel is touched
    /// at most once per call and hits take precedence.
    pub fn integrate_scan(&mut self, origin: &P3, endpoints: &[P3]) {
        let mut hits = BTreeSet::new();
        let mut misses = BTreeSet::new();
        for e in endpoints {
            for k in self.traverse(origin, e) {
                misses.insert(k);
            }
            if let Ok(k) = self.key_of(e) {
                hits.insert(k);
            }
        }
        for k in misses.difference(&hits) {
            let _ = self.update_voxel(*k, false);
        }
        for k in &hits {
            let _ = self.update_voxel(*k, true);
        }
    }

    /// Voxels crossed by the segment `from -> to`, excluding the voxel that
    /// contains `to`, in traversal order. Out-of-bounds cells are skipped.
    pub fn traverse(&self, from: &P3, to: &P3) -> Vec<VoxelKey> {
        let r = self.config.resolution;
        let a = (from - self.origin) / r;
        let b = (to - self.origin) / r;
        let d = b - a;
        let mut cell = [a.x.floor() as i64, a.y.floor() as i64, a.z.floor() as i64];
        let end = [b.x.floor() as i64, b.y.floor() as i64, b.z.floor() as i64];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for ax in 0..3 {
            if d[ax] > 0.0 {
                step[ax] = 1;
                t_max[ax] = ((cell[ax] + 1) as f64 - a[ax]) / d[ax];
                t_delta[ax] = 1.0 / d[ax];
            } else if d[ax] < 0.0 {
                step[ax] = -1;
                t_max[ax] = (cell[ax] as f64 - a[ax]) / d[ax];
                t_delta[ax] = -1.0 / d[ax];
            }
        }
        let budget: i64 = (0..3).map(|ax| (end[ax] - cell[ax]).abs()).sum::<i64>() + 1;
        let n = self.cells_per_side() as i64;
        let mut out = Vec::new();
        for _ in 0..budget {
            if cell == end {
                break;
            }
            if cell.iter().all(|&c| c >= 0 && c < n) {
                out.push(VoxelKey::new(cell[0] as u32, cell[1] as u32, cell[2] as u32));
            }
            let ax = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[ax] > 1.0 {
                break;
            }
            cell[ax] += step[ax];
            t_max[ax] += t_delta[ax];
        }
        out
    }

    /// Every stored finest voxel with its log-odds, pruned regions expanded,
    /// sorted by key.
    pub fn leaves(&self) -> Vec<(VoxelKey, f64)> {
        let mut out = Vec::new();
        if let Some(root) = &self.root {
            collect_leaves(root, self.depth, [0, 0, 0], &mut out);
        }
        out.sort_by_key(|a| a.0);
        out
    }

    /// Number of nodes stored; shrinks when pruning collapses regions.
    pub fn node_count(&self) -> usize {
        fn count(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 1,
                Node::Inner(ch) => 1 + ch.iter().flatten().map(count).sum::<usize>(),
            }
        }
        self.root.as_ref().map_or(0, count)
    }

    /// Text dump: `voxel i j k log_odds`, one finest voxel per line, sorted.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.leaves() {
            s.push_str(&format!("voxel {} {} {} {:.6}\n", k.i, k.j, k.k, v));
        }
        s
    }

    /// Cell states of the horizontal slice containing height `z`, row-major
    /// with `(i, j)` indexing; `None` if `z` is outside the tree.
    pub fn slice(&self, z: f64) -> Option<Vec<CellState>> {
        let k = ((z - self.origin.z) / self.config.resolution).floor();
        let n = self.cells_per_side();
        if !(k >= 0.0 && k < n as f64) {
            return None;
        }
        let k = k as u32;
        let mut out = Vec::with_capacity((n * n) as usize);
        for j in 0..n {
            for i in 0..n {
                out.push(self.state(&VoxelKey::new(i, j, k)));
            }
        }
        Some(out)
    }
}

impl OccupancyQuery for OccupancyOctree {
    fn resolution(&self) -> f64 {
        self.config.resolution
    }

    fn occupied_voxels_in(&self, region: &Aabb, threshold: f64) -> Vec<P3> {
        let mut keys = Vec::new();
        if let Some(root) = &self.root {
            self.collect_region(root, self.depth, [0, 0, 0], region, threshold, &mut keys);
        }
        keys.sort();
        keys.iter().map(|k| self.center_of(k)).collect()
    }
}

impl OccupancyOctree {
    fn collect_region(
        &self,
        node: &Node,
        level: u8,
        base: [u32; 3],
        region: &Aabb,
        threshold: f64,
        out: &mut Vec<VoxelKey>,
    ) {
        let r = self.config.resolution;
        let size = 1u32 << level;
        let lo = self.origin + V3::new(base[0] as f64, base[1] as f64, base[2] as f64) * r;
        let node_box = Aabb::new(lo, lo + V3::repeat(size as f64 * r));
        if !node_box.intersects(region) {
            return;
        }
        match node {
            Node::Leaf(v) => {
                if logistic(*v) < threshold {
                    return;
                }
                // Expand only the index range whose centers can fall in the region.
                let range = |ax: usize, o: f64| {
                    let a = (((region.min[ax] - o) / r - 0.5).ceil().max(base[ax] as f64)) as u32;
                    let b = (((region.max[ax] - o) / r - 0.5).floor().min((base[ax] + size - 1) as f64)) as i64;
                    (a, b)
                };
                let (i0, i1) = range(0, self.origin.x);
                let (j0, j1) = range(1, self.origin.y);
                let (k0, k1) = range(2, self.origin.z);
                for i in i0 as i64..=i1 {
                    for j in j0 as i64..=j1 {
                        for k in k0 as i64..=k1 {
                            let key = VoxelKey::new(i as u32, j as u32, k as u32);
                            if region.contains(&self.center_of(&key)) {
                                out.push(key);
                            }
                        }
                    }
                }
            }
            Node::Inner(ch) => {
                let half = size / 2;
                for (idx, c) in ch.iter().enumerate() {
                    if let Some(c) = c {
                        let b = [
                            base[0] + (idx as u32 & 1) * half,
                            base[1] + ((idx as u32 >> 1) & 1) * half,
                            base[2] + ((idx as u32 >> 2) & 1) * half,
                        ];
                        self.collect_region(c, level - 1, b, region, threshold, out);
                    }
                }
            }
        }
    }
}

fn update_rec(slot: &mut Option<Node>, level: u8, key: &VoxelKey, hit: bool, cfg: &OctreeConfig) {
    if level == 0 {
        let prev = match slot {
            Some(Node::Leaf(v)) => *v,
            _ => 0.0,
        };
        *slot = Some(Node::Leaf(cfg.apply(prev, hit)));
        return;
    }
    let node = slot.get_or_insert_with(|| Node::Inner(empty_children()));
    if let Node::Leaf(v) = *node {
        let mut ch = empty_children();
        for c in ch.iter_mut() {
            *c = Some(Node::Leaf(v));
        }
        *node = Node::Inner(ch);
    }
    let Node::Inner(children) = node else { unreachable!() };
    update_rec(&mut children[key.child_index(level)], level - 1, key, hit, cfg);
    if cfg.prune {
        if let Some(Node::Leaf(first)) = &children[0] {
            let first = *first;
            if children.iter().all(|c| matches!(c, Some(Node::Leaf(v)) if *v == first)) {
                *node = Node::Leaf(first);
            }
        }
    }
}

fn collect_leaves(node: &Node, level: u8, base: [u32; 3], out: &mut Vec<(VoxelKey, f64)>) {
    match node {
        Node::Leaf(v) => {
            let size = 1u32 << level;
            for i in 0..size {
                for j in 0..size {
                    for k in 0..size {
                        out.push((VoxelKey::new(base[0] + i, base[1] + j, base[2] + k), *v));
                    }
                }
            }
        }
        Node::Inner(ch) => {
            let half = 1u32 << (level - 1);
            for (idx, c) in ch.iter().enumerate() {
                if let Some(c) = c {
                    let b = [
                        base[0] + (idx as u32 & 1) * half,
                        base[1] + ((idx as u32 >> 1) & 1) * half,
                        base[2] + ((idx as u32 >> 2) & 1) * half,
                    ];
                    collect_leaves(c, level - 1, b, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(depth: u8) -> OccupancyOctree {
        OccupancyOctree::new(P3::origin(), depth, OctreeConfig { resolution: 0.1, ..Default::default() })
    }

    #[test]
    fn single_hit_and_miss() {
        let mut t = tree(4);
        let k = VoxelKey::new(1, 2, 3);
        assert_eq!(t.occupancy_key(&k), 0.5);
        t.update_voxel(k, true).unwrap();
        // logistic(ln(0.7/0.3)) = 0.7
        assert!((t.occupancy_key(&k) - 0.7).abs() < 1e-12);
        let k2 = VoxelKey::new(0, 0, 0);
        t.update_voxel(k2, false).unwrap();
        assert!((t.occupancy_key(&k2) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn saturates_at_clamp_max() {
        let mut t = tree(3);
        let k = VoxelKey::new(7, 7, 7);
        for _ in 0..100 {
            t.update_voxel(k, true).unwrap();
        }
        assert_eq!(t.log_odds(&k), Some(t.config().clamp_max));
        assert!((t.occupancy_key(&k) - 0.97).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_key() {
        let mut t = tree(2);
        assert_eq!(t.update_voxel(VoxelKey::new(4, 0, 0), true), Err(OctreeError::OutOfBounds));
        assert_eq!(t.occupancy_at(&P3::new(-0.01, 0.0, 0.0)), Err(OctreeError::OutOfBounds));
        assert_eq!(t.occupancy_at(&P3::new(0.05, 0.05, 0.05)), Ok(0.5));
    }

    #[test]
    fn pruning_collapses_uniform_block() {
        let mut t = tree(3);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for _ in 0..20 {
                        t.update_voxel(VoxelKey::new(i, j, k), true).unwrap();
                    }
                }
            }
        }
        // Root inner -> one collapsed leaf child.
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.leaves().len(), 8);
        t.update_voxel(VoxelKey::new(0, 0, 0), false).unwrap();
        assert!(t.log_odds(&VoxelKey::new(0, 0, 0)).unwrap() < t.config().clamp_max);
        assert_eq!(t.log_odds(&VoxelKey::new(1, 1, 1)), Some(t.config().clamp_max));
    }

    #[test]
    fn one_meter_ray() {
        let mut t = tree(5);
        let o = P3::new(0.05, 0.05, 0.05);
        let e = P3::new(1.05, 0.05, 0.05);
        let crossed = t.traverse(&o, &e);
        assert_eq!(crossed.len(), 10);
        assert!(crossed.iter().all(|k| k.j == 0 && k.k == 0 && k.i < 10));
        t.integrate_scan(&o, &[e]);
        assert!((t.occupancy_at(&e).unwrap() - 0.7).abs() < 1e-12);
        for k in &crossed {
            assert!((t.occupancy_key(k) - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_ray_updates_only_endpoint() {
        let mut t = tree(3);
        let p = P3::new(0.25, 0.25, 0.25);
        t.integrate_scan(&p, &[p]);
        assert_eq!(t.leaves().len(), 1);
        assert!((t.occupancy_at(&p).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn per_scan_dedup_and_hit_precedence() {
        let mut t = tree(4);
        let o = P3::new(0.05, 0.05, 0.05);
        let e1 = P3::new(0.52, 0.05, 0.05);
        let e2 = P3::new(0.58, 0.06, 0.04);
        // Third ray passes through e1's voxel and ends beyond it.
        let e3 = P3::new(0.95, 0.05, 0.05);
        t.integrate_scan(&o, &[e1, e2, e3]);
        let k = t.key_of(&e1).unwrap();
        assert_eq!(t.log_odds(&k), Some(t.config().l_hit));
    }

    #[test]
    fn occupied_region_query() {
        let mut t = tree(4);
        let all = Aabb::new(P3::origin(), P3::new(1.6, 1.6, 1.6));
        assert!(t.occupied_voxels_in(&all, 0.6).is_empty());
        for _ in 0..10 {
            t.update_voxel(VoxelKey::new(3, 4, 5), true).unwrap();
        }
        let got = t.occupied_voxels_in(&all, 0.9);
        assert_eq!(got.len(), 1);
        assert!((got[0] - P3::new(0.35, 0.45, 0.55)).norm() < 1e-12);
        let elsewhere = Aabb::new(P3::origin(), P3::new(0.3, 0.3, 0.3));
        assert!(t.occupied_voxels_in(&elsewhere, 0.9).is_empty());
    }

    #[test]
    fn dump_format() {
        let mut t = tree(2);
        t.update_voxel(VoxelKey::new(1, 0, 0), true).unwrap();
        t.update_voxel(VoxelKey::new(0, 1, 0), false).unwrap();
        assert_eq!(t.dump(), "voxel 0 1 0 -0.405465\nvoxel 1 0 0 0.847298\n");
    }
}
