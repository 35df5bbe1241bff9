//! Static 3D KD-tree over `(point, id)` pairs.
//!
//! Built once from a slice by median splits on cycling axes. k-nearest
//! results are ordered by `(squared distance, id)` so ties are deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geom::P3;

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    // Implicit balanced layout: the median of `items[lo..hi]` sits at `(lo + hi) / 2`.
    items: Vec<(P3, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    d2: f64,
    id: u32,
    idx: usize,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, o: &Self) -> Ordering {
        self.d2.total_cmp(&o.d2).then(self.id.cmp(&o.id))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl KdTree {
    pub fn build(points: &[(P3, u32)]) -> Self {
        let mut items = points.to_vec();
        let n = items.len();
        build_rec(&mut items, 0, n, 0);
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[(P3, u32)] {
        &self.items
    }

    /// Up to `k` entries by ascending `(distance, id)`.
    pub fn nearest(&self, q: &P3, k: usize) -> Vec<(P3, u32, f64)> {
        if k == 0 || self.items.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(q, k, 0, self.items.len(), 0, &mut heap);
        let mut v = heap.into_sorted_vec();
        v.truncate(k);
        v.into_iter()
            .map(|c| (self.items[c.idx].0, c.id, c.d2.sqrt()))
            .collect()
    }

    /// Every entry within `radius` (inclusive), sorted by `(distance, id)`.
    pub fn within(&self, q: &P3, radius: f64) -> Vec<(P3, u32, f64)> {
        let mut out = Vec::new();
        self.radius_rec(q, radius * radius, 0, self.items.len(), 0, &mut out);
        out.sort();
        out.into_iter()
            .map(|c| (self.items[c.idx].0, c.id, c.d2.sqrt()))
            .collect()
    }

    fn knn_rec(&self, q: &P3, k: usize, lo: usize, hi: usize, axis: usize, heap: &mut BinaryHeap<Cand>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let (p, id) = self.items[mid];
        let c = Cand { d2: (p - q).norm_squared(), id, idx: mid };
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().expect("heap is full") {
            heap.pop();
            heap.push(c);
        }
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        let next = (axis + 1) % 3;
        self.knn_rec(q, k, near.0, near.1, next, heap);
        // Equal-distance points on the far side can still win on id, so only
        // strictly farther planes are pruned.
        if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").d2 {
            self.knn_rec(q, k, far.0, far.1, next, heap);
        }
    }

    fn radius_rec(&self, q: &P3, r2: f64, lo: usize, hi: usize, axis: usize, out: &mut Vec<Cand>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let (p, id) = self.items[mid];
        let d2 = (p - q).norm_squared();
        if d2 <= r2 {
            out.push(Cand { d2, id, idx: mid });
        }
        let diff = q[axis] - p[axis];
        let next = (axis + 1) % 3;
        if diff <= 0.0 || diff * diff <= r2 {
            self.radius_rec(q, r2, lo, mid, next, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.radius_rec(q, r2, mid + 1, hi, next, out);
        }
    }
}

fn build_rec(items: &mut [(P3, u32)], lo: usize, hi: usize, axis: usize) {
    if hi - lo <= 1 {
        return;
    }
    let mid = (lo + hi) / 2;
    items[lo..hi].select_nth_unstable_by(mid - lo, |a, b| a.0[axis].total_cmp(&b.0[axis]).then(a.1.cmp(&b.1)));
    let next = (axis + 1) % 3;
    build_rec(items, lo, mid, next);
    build_rec(items, mid + 1, hi, next);
}
