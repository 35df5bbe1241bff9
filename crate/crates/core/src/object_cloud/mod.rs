//! Object memory: fused per-object point estimates behind a KD-tree, with
//! class/region subscriptions notified once per update batch.

mod kdtree;
mod ransac;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use kdtree::KdTree;
pub use ransac::{ransac_edge, RansacParams, SurfaceKind, SurfaceModel};

use crate::geom::{Aabb, Rect, P3, V3};
use crate::sim::sensors::Detection;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error("the object cloud is empty")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no voxel centers given")]
    NoVoxels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub class_label: String,
    pub center: P3,
    pub extents: V3,
}

impl From<&Detection> for Observation {
    fn from(d: &Detection) -> Self {
        Self { class_label: d.class_label.clone(), center: d.center_3d, extents: d.extents }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectEstimate {
    pub id: u32,
    pub class_label: String,
    pub centroid: P3,
    pub aabb: Aabb,
    pub observation_count: u32,
    pub last_seen: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterestFilter {
    pub class_label: Option<String>,
    pub region: Option<Aabb>,
}

impl InterestFilter {
    pub fn class(label: &str) -> Self {
        Self { class_label: Some(label.to_string()), region: None }
    }

    pub fn region(region: Aabb) -> Self {
        Self { class_label: None, region: Some(region) }
    }

    pub fn matches(&self, e: &ObjectEstimate) -> bool {
        self.class_label.as_ref().is_none_or(|c| *c == e.class_label)
            && self.region.as_ref().is_none_or(|r| r.contains(&e.centroid))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Notification {
    pub subscriber: usize,
    /// Changed estimates matching the filter, ascending.
    pub estimate_ids: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct ObjectCloud {
    pub association_gate: f64,
    estimates: BTreeMap<u32, ObjectEstimate>,
    index: KdTree,
    next_id: u32,
    subscribers: Vec<InterestFilter>,
}

impl Default for ObjectCloud {
    fn default() -> Self {
        Self::new(0.1)
    }
}

impl ObjectCloud {
    pub fn new(association_gate: f64) -> Self {
        Self { association_gate, estimates: BTreeMap::new(), index: KdTree::default(), next_id: 0, subscribers: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&ObjectEstimate> {
        self.estimates.get(&id)
    }

    pub fn estimates(&self) -> impl Iterator<Item = &ObjectEstimate> {
        self.estimates.values()
    }

    /// Fuses into the nearest same-class estimate within the gate, or
    /// inserts a new one. Returns the id touched.
    pub fn upsert(&mut self, obs: &Observation, t: f64) -> u32 {
        let half = obs.extents / 2.0;
        let obs_box = Aabb::new(obs.center - half, obs.center + half);
        let hit = self
            .index
            .within(&obs.center, self.association_gate)
            .into_iter()
            .map(|(_, id, _)| id)
            .find(|id| self.estimates[id].class_label == obs.class_label);
        let id = match hit {
            Some(id) => {
                let e = self.estimates.get_mut(&id).expect("indexed id exists");
                let n = e.observation_count as f64;
                e.centroid = P3::from((e.centroid.coords * n + obs.center.coords) / (n + 1.0));
                e.aabb = e.aabb.union(&obs_box);
                e.observation_count += 1;
                e.last_seen = t;
                id
            }
            None => {
                let id = self.next_id;
                self.next_id += 1;
                self.estimates.insert(
                    id,
                    ObjectEstimate {
                        id,
                        class_label: obs.class_label.clone(),
                        centroid: obs.center,
                        aabb: obs_box,
                        observation_count: 1,
                        last_seen: t,
                    },
                );
                id
            }
        };
        self.rebuild_index();
        id
    }

    pub fn upsert_detection(&mut self, det: &Detection, t: f64) -> u32 {
        self.upsert(&det.into(), t)
    }

    pub fn remove(&mut self, id: u32) -> Option<ObjectEstimate> {
        let e = self.estimates.remove(&id);
        if e.is_some() {
            self.rebuild_index();
        }
        e
    }

    fn rebuild_index(&mut self) {
        let pts: Vec<(P3, u32)> = self.estimates.values().map(|e| (e.centroid, e.id)).collect();
        self.index = KdTree::build(&pts);
    }

    /// Registers an interest filter; returns the subscriber index.
    pub fn subscribe(&mut self, filter: InterestFilter) -> usize {
        self.subscribers.push(filter);
        self.subscribers.len() - 1
    }

    /// Applies a batch of observations, then notifies each matching
    /// subscriber once, in registration order.
    pub fn apply_batch(&mut self, batch: &[Observation], t: f64) -> Vec<Notification> {
        let changed: BTreeSet<u32> = batch.iter().map(|o| self.upsert(o, t)).collect();
        self.subscribers
            .iter()
            .enumerate()
            .filter_map(|(i, f)| {
                let ids: Vec<u32> = changed.iter().copied().filter(|id| f.matches(&self.estimates[id])).collect();
                (!ids.is_empty()).then_some(Notification { subscriber: i, estimate_ids: ids })
            })
            .collect()
    }

    pub fn query_nearest(&self, p: &P3, k: usize) -> Result<Vec<&ObjectEstimate>, CloudError> {
        if k == 0 {
            return Err(CloudError::ZeroK);
        }
        if self.is_empty() {
            return Err(CloudError::Empty);
        }
        Ok(self.index.nearest(p, k).into_iter().map(|(_, id, _)| &self.estimates[&id]).collect())
    }

    /// Estimates resting on a horizontal surface: centroid height in
    /// `(h, h + 0.5]` and inside `extent`. Id order.
    pub fn query_above_surface(&self, surface: &SurfaceModel, extent: &Rect) -> Vec<&ObjectEstimate> {
        let h = surface.height;
        self.estimates
            .values()
            .filter(|e| e.centroid.z > h && e.centroid.z <= h + 0.5 && extent.contains(&e.centroid.xy()))
            .collect()
    }

    /// True when the index holds exactly the map's ids at their centroids.
    pub fn index_consistent(&self) -> bool {
        let mut a: Vec<(u32, P3)> = self.index.items().iter().map(|(p, id)| (*id, *p)).collect();
        a.sort_by_key(|x| x.0);
        a.len() == self.estimates.len() && a.iter().zip(self.estimates.values()).all(|((id, p), e)| *id == e.id && *p == e.centroid)
    }

    /// `object <id> <class> x y z count`, id-sorted.
    pub fn dump(&self) -> String {
        self.estimates
            .values()
            .map(|e| {
                format!(
                    "object {} {} {:.4} {:.4} {:.4} {}\n",
                    e.id, e.class_label, e.centroid.x, e.centroid.y, e.centroid.z, e.observation_count
                )
            })
            .collect()
    }
}

/// Tight box over voxel cells given by their centers.
pub fn fit_bbox(centers: &[P3], resolution: f64) -> Result<Aabb, CloudError> {
    let first = centers.first().ok_or(CloudError::NoVoxels)?;
    let mut lo = *first;
    let mut hi = *first;
    for c in centers {
        lo = lo.inf(c);
        hi = hi.sup(c);
    }
    let h = V3::repeat(resolution / 2.0);
    Ok(Aabb::new(lo - h, hi + h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(c: &str, x: f64, y: f64, z: f64) -> Observation {
        Observation { class_label: c.into(), center: P3::new(x, y, z), extents: V3::repeat(0.06) }
    }

    #[test]
    fn fuse_and_gate() {
        let mut cl = ObjectCloud::new(0.1);
        cl.upsert(&obs("cup", 0.0, 0.0, 0.0), 0.0);
        assert_eq!(cl.len(), 1);
        cl.upsert(&obs("cup", 0.02, 0.0, 0.0), 1.0);
        assert_eq!(cl.len(), 1);
        let e = cl.get(0).unwrap();
        assert_eq!(e.observation_count, 2);
        assert!((e.centroid.x - 0.01).abs() < 1e-12);
        assert_eq!(e.last_seen, 1.0);
        cl.upsert(&obs("cup", 0.5, 0.0, 0.0), 2.0);
        assert_eq!(cl.len(), 2);
        // Same place, other class: separate estimate.
        cl.upsert(&obs("bowl", 0.0, 0.0, 0.0), 2.0);
        assert_eq!(cl.len(), 3);
        assert!(cl.index_consistent());
    }

    #[test]
    fn nearest_queries() {
        let mut cl = ObjectCloud::default();
        assert_eq!(cl.query_nearest(&P3::origin(), 1).unwrap_err(), CloudError::Empty);
        cl.upsert(&obs("a", 0.0, 0.0, 0.0), 0.0);
        cl.upsert(&obs("a", 1.0, 0.0, 0.0), 0.0);
        let q = P3::new(0.2, 0.0, 0.0);
        assert_eq!(cl.query_nearest(&q, 1).unwrap()[0].id, 0);
        let ids: Vec<u32> = cl.query_nearest(&q, 2).unwrap().iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn above_surface() {
        let mut cl = ObjectCloud::default();
        cl.upsert(&obs("a", 0.5, 0.5, 0.82), 0.0);
        cl.upsert(&obs("b", 0.5, 0.5, 0.5), 0.0);
        cl.upsert(&obs("c", 3.0, 0.5, 0.82), 0.0);
        let s = SurfaceModel { kind: SurfaceKind::HorizontalEdge, height: 0.72, inliers: vec![], support: (0.0, 1.0) };
        let ext = Rect::new(crate::geom::P2::new(0.0, 0.0), crate::geom::P2::new(1.0, 1.0));
        let got: Vec<&str> = cl.query_above_surface(&s, &ext).iter().map(|e| e.class_label.as_str()).collect();
        assert_eq!(got, vec!["a"]);
    }

    #[test]
    fn notifications_once_per_batch() {
        let mut cl = ObjectCloud::default();
        let bowls = cl.subscribe(InterestFilter::class("bowl"));
        let far = cl.subscribe(InterestFilter::region(Aabb::new(P3::new(5.0, 5.0, 0.0), P3::new(6.0, 6.0, 1.0))));
        let all = cl.subscribe(InterestFilter::default());
        let n = cl.apply_batch(&[obs("bowl", 0.0, 0.0, 0.0), obs("bowl", 0.01, 0.0, 0.0)], 0.0);
        assert_eq!(n, vec![
            Notification { subscriber: bowls, estimate_ids: vec![0] },
            Notification { subscriber: all, estimate_ids: vec![0] },
        ]);
        assert!(n.iter().all(|x| x.subscriber != far));
    }

    #[test]
    fn bbox_fit() {
        let b = fit_bbox(&[P3::origin()], 0.1).unwrap();
        assert!((b.extents() - V3::repeat(0.1)).norm() < 1e-12);
        let b = fit_bbox(&[P3::origin(), P3::new(0.1, 0.0, 0.0), P3::new(0.1, 0.0, 0.0)], 0.1).unwrap();
        assert!((b.center() - P3::new(0.05, 0.0, 0.0)).norm() < 1e-12);
        assert!((b.extents() - V3::new(0.2, 0.1, 0.1)).norm() < 1e-12);
        assert_eq!(fit_bbox(&[], 0.1), Err(CloudError::NoVoxels));
    }

    #[test]
    fn dump_lines() {
        let mut cl = ObjectCloud::default();
        cl.upsert(&obs("cup", 1.0, 2.0, 0.5), 0.0);
        assert_eq!(cl.dump(), "object 0 cup 1.0000 2.0000 0.5000 1\n");
    }
}
