//! Horizontal-edge RANSAC over height-profile samples.
//!
//! Samples are `(s, z)` pairs: position along the profile and measured
//! height. A hypothesis is the horizontal line through one sample; the best
//! one maximizes inliers, then minimizes the residual sum, then prefers the
//! earlier draw.

use rand::Rng;

use crate::geom::P2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    HorizontalEdge,
    Plane,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceModel {
    pub kind: SurfaceKind,
    pub height: f64,
    /// Indices into the input samples.
    pub inliers: Vec<usize>,
    /// Range of `s` covered by the inliers.
    pub support: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_tol: f64,
    pub min_inliers: usize,
    pub height_tol: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { iterations: 100, inlier_tol: 0.01, min_inliers: 30, height_tol: 0.05 }
    }
}

fn score(points: &[P2], h: f64, tol: f64) -> (usize, f64) {
    points.iter().fold((0, 0.0), |(n, r), p| {
        let d = (p.y - h).abs();
        if d <= tol {
            (n + 1, r + d)
        } else {
            (n, r)
        }
    })
}

fn inliers_of(points: &[P2], h: f64, tol: f64) -> Vec<usize> {
    (0..points.len()).filter(|&i| (points[i].y - h).abs() <= tol).collect()
}

fn mean_height(points: &[P2], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| points[i].y).sum::<f64>() / idx.len() as f64
}

/// Finds a horizontal edge near `target_height`. Draws hypotheses without
/// replacement, so `iterations >= points.len()` is exhaustive.
pub fn ransac_edge<R: Rng + ?Sized>(
    points: &[P2],
    target_height: f64,
    params: &RansacParams,
    rng: &mut R,
) -> Option<SurfaceModel> {
    assert!(params.iterations >= 1, "ransac needs at least one iteration");
    if points.is_empty() {
        return None;
    }
    let draws = params.iterations.min(points.len());
    let order = rand::seq::index::sample(rng, points.len(), draws);
    let mut best: Option<(usize, f64, f64)> = None;
    for i in order.iter() {
        let h = points[i].y;
        let (n, r) = score(points, h, params.inlier_tol);
        let better = match best {
            None => true,
            Some((bn, br, _)) => n > bn || (n == bn && r < br),
        };
        if better {
            best = Some((n, r, h));
        }
    }
    let (_, _, h0) = best?;

    // Least-squares refinement of a horizontal line is the inlier mean.
    // Iterate to a fixed point so the reported inliers match the height.
    let mut idx = inliers_of(points, h0, params.inlier_tol);
    let mut height = mean_height(points, &idx);
    for _ in 0..16 {
        let next = inliers_of(points, height, params.inlier_tol);
        if next.is_empty() || next == idx {
            break;
        }
        idx = next;
        height = mean_height(points, &idx);
    }
    idx.retain(|&i| (points[i].y - height).abs() <= params.inlier_tol);

    if idx.len() < params.min_inliers || (height - target_height).abs() > params.height_tol {
        return None;
    }
    let lo = idx.iter().map(|&i| points[i].x).fold(f64::INFINITY, f64::min);
    let hi = idx.iter().map(|&i| points[i].x).fold(f64::NEG_INFINITY, f64::max);
    Some(SurfaceModel { kind: SurfaceKind::HorizontalEdge, height, inliers: idx, support: (lo, hi) })
}
