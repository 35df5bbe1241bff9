//! Operator tracking cues: leg clusters from the scan, gated track
//! association, torso color histograms for re-identification and wrist
//! velocity wave detection.

use thiserror::Error;

use crate::geom::{P2, P3};
use crate::sim::sensors::Scan;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("histogram layouts differ ({0}x{1} vs {2}x{3})")]
    LayoutMismatch(usize, usize, usize, usize),
    #[error("no color samples")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegParams {
    /// Range discontinuity that splits clusters.
    pub break_dist: f64,
    pub min_width: f64,
    pub max_width: f64,
    /// Legs closer than this merge into one person candidate.
    pub pair_dist: f64,
}

impl Default for LegParams {
    fn default() -> Self {
        Self { break_dist: 0.1, min_width: 0.05, max_width: 0.25, pair_dist: 0.45 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegCandidate {
    /// Robot frame.
    pub center: P2,
    pub point_count: usize,
    pub width: f64,
}

/// Leg-like clusters in the scan, with nearby pairs merged.
pub fn detect_legs(scan: &Scan, p: &LegParams) -> Vec<LegCandidate> {
    // Clusters as beam index ranges.
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..scan.len() {
        let continues = start.is_some() && scan.is_hit(i) && (scan.point_local(i) - scan.point_local(i - 1)).norm() <= p.break_dist;
        if !continues {
            if let Some(s) = start.take() {
                clusters.push((s, i - 1));
            }
            if scan.is_hit(i) {
                start = Some(i);
            }
        }
    }
    if let Some(s) = start {
        clusters.push((s, scan.len() - 1));
    }

    let legs: Vec<LegCandidate> = clusters
        .iter()
        .filter_map(|&(a, b)| {
            let pts: Vec<P2> = (a..=b).map(|i| scan.point_local(i)).collect();
            let width = (pts[pts.len() - 1] - pts[0]).norm();
            if width < p.min_width || width > p.max_width {
                return None;
            }
            // Background seen between nearer objects is not a leg.
            let near = (a..=b).map(|i| scan.ranges[i]).fold(f64::INFINITY, f64::min);
            let occluded = |j: Option<usize>| j.is_some_and(|j| scan.is_hit(j) && scan.ranges[j] < near - p.break_dist);
            if occluded(a.checked_sub(1)) || occluded((b + 1 < scan.len()).then_some(b + 1)) {
                return None;
            }
            let mean = pts.iter().fold(P2::origin(), |acc, q| acc + q.coords) / pts.len() as f64;
            // The visible arc sits in front of the leg axis.
            let center = mean + mean.coords.normalize() * (width / 2.0);
            Some(LegCandidate { center, point_count: pts.len(), width })
        })
        .collect();

    let mut out = Vec::new();
    let mut i = 0;
    while i < legs.len() {
        if i + 1 < legs.len() && (legs[i].center - legs[i + 1].center).norm() <= p.pair_dist {
            let (a, b) = (legs[i], legs[i + 1]);
            out.push(LegCandidate {
                center: P2::from((a.center.coords + b.center.coords) / 2.0),
                point_count: a.point_count + b.point_count,
                width: a.width.max(b.width),
            });
            i += 2;
        } else {
            out.push(legs[i]);
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Tracking,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackParams {
    pub gate: f64,
    pub lost_after: u32,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self { gate: 0.5, lost_after: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonTrack {
    pub state: TrackState,
    /// World frame.
    pub position: P2,
    pub last_update: f64,
    pub misses: u32,
    pub target_histogram: ColorHistogram,
}

impl PersonTrack {
    pub fn new(position: P2, t: f64, target_histogram: ColorHistogram) -> Self {
        Self { state: TrackState::Tracking, position, last_update: t, misses: 0, target_histogram }
    }

    /// Resets the track onto a re-identified person.
    pub fn reacquire(&mut self, position: P2, t: f64) {
        self.state = TrackState::Tracking;
        self.position = position;
        self.last_update = t;
        self.misses = 0;
    }

    /// `track t=<s> state=<tracking|lost> x y`
    pub fn trace_line(&self, t: f64) -> String {
        let s = match self.state {
            TrackState::Tracking => "tracking",
            TrackState::Lost => "lost",
        };
        format!("track t={:.2} state={} {:.3} {:.3}", t, s, self.position.x, self.position.y)
    }
}

/// Moves the track to the nearest candidate within the gate, or counts a
/// miss. A lost track only recovers through [`PersonTrack::reacquire`].
pub fn associate_track(track: &PersonTrack, candidates: &[P2], t: f64, p: &TrackParams) -> PersonTrack {
    let mut next = track.clone();
    let nearest = candidates
        .iter()
        .map(|c| ((c - track.position).norm(), *c))
        .filter(|(d, _)| *d <= p.gate)
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match nearest {
        Some((_, c)) if track.state == TrackState::Tracking => {
            next.position = c;
            next.last_update = t;
            next.misses = 0;
        }
        _ => {
            next.misses += 1;
            if next.misses >= p.lost_after {
                next.state = TrackState::Lost;
            }
        }
    }
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorHistogram {
    pub hue_bins: usize,
    pub sat_bins: usize,
    /// Row-major over (hue, saturation); sums to 1.
    pub bins: Vec<f64>,
}

/// Hue in degrees `[0, 360)` and saturation in `[0, 1]`.
pub fn rgb_to_hs(c: [u8; 3]) -> (f64, f64) {
    let [r, g, b] = c.map(|v| v as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    (h.rem_euclid(360.0), s)
}

impl ColorHistogram {
    pub fn from_bins(hue_bins: usize, sat_bins: usize, bins: Vec<f64>) -> Self {
        assert_eq!(bins.len(), hue_bins * sat_bins, "bin count does not match layout");
        let total: f64 = bins.iter().sum();
        Self { hue_bins, sat_bins, bins: bins.iter().map(|b| b / total).collect() }
    }

    pub fn from_samples(samples: &[[u8; 3]]) -> Result<Self, TrackingError> {
        Self::from_samples_with(samples, 8, 8)
    }

    pub fn from_samples_with(samples: &[[u8; 3]], hue_bins: usize, sat_bins: usize) -> Result<Self, TrackingError> {
        if samples.is_empty() {
            return Err(TrackingError::NoSamples);
        }
        let mut bins = vec![0.0; hue_bins * sat_bins];
        for c in samples {
            let (h, s) = rgb_to_hs(*c);
            let hi = ((h / 360.0 * hue_bins as f64) as usize).min(hue_bins - 1);
            let si = ((s * sat_bins as f64) as usize).min(sat_bins - 1);
            bins[hi * sat_bins + si] += 1.0;
        }
        Ok(Self::from_bins(hue_bins, sat_bins, bins))
    }
}

/// Histogram intersection.
pub fn color_similarity(a: &ColorHistogram, b: &ColorHistogram) -> Result<f64, TrackingError> {
    if a.hue_bins != b.hue_bins || a.sat_bins != b.sat_bins {
        return Err(TrackingError::LayoutMismatch(a.hue_bins, a.sat_bins, b.hue_bins, b.sat_bins));
    }
    let s: f64 = a.bins.iter().zip(&b.bins).map(|(x, y)| x.min(*y)).sum();
    Ok(s.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReidCandidate {
    pub id: String,
    pub histogram: ColorHistogram,
    pub distance: f64,
}

/// Best color match at or above `threshold`; equal scores go to the nearer
/// person.
pub fn reidentify(target: &ColorHistogram, candidates: &[ReidCandidate], threshold: f64) -> Option<String> {
    candidates
        .iter()
        .filter_map(|c| color_similarity(target, &c.histogram).ok().map(|s| (s, c)))
        .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.distance.total_cmp(&a.1.distance)).then(b.1.id.cmp(&a.1.id)))
        .filter(|(s, _)| *s >= threshold)
        .map(|(_, c)| c.id.clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveFrame {
    pub shoulder: P3,
    pub wrist: P3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveParams {
    pub window: usize,
    pub vel_threshold: f64,
    pub min_active: usize,
}

impl Default for WaveParams {
    fn default() -> Self {
        Self { window: 5, vel_threshold: 0.5, min_active: 3 }
    }
}

/// Counts frame-to-frame speeds of the wrist relative to the shoulder over
/// the last `window` frames.
pub fn detect_wave(history: &[WaveFrame], frame_dt: f64, p: &WaveParams) -> bool {
    if p.window < 2 || history.len() < p.window {
        return false;
    }
    let recent = &history[history.len() - p.window..];
    let active = recent
        .windows(2)
        .filter(|w| {
            let r0 = w[0].wrist - w[0].shoulder;
            let r1 = w[1].wrist - w[1].shoulder;
            (r1 - r0).norm() / frame_dt > p.vel_threshold
        })
        .count();
    active >= p.min_active
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Pose2, V3};

    #[test]
    fn legs_from_synthetic_scan() {
        // Two circles of radius 0.07 at (1, +-0.1), wall at x = 3.
        let n = 481;
        let mut angles = Vec::new();
        let mut ranges = Vec::new();
        for i in 0..n {
            let a = -std::f64::consts::PI * 2.0 / 3.0 + i as f64 * 0.5f64.to_radians();
            let d = crate::geom::V2::new(a.cos(), a.sin());
            let mut r: f64 = 10.0;
            for cy in [0.1, -0.1] {
                if let Some(t) = crate::geom::ray_circle_entry(&P2::origin(), &d, &P2::new(1.0, cy), 0.07, 10.0) {
                    r = r.min(t);
                }
            }
            if d.x > 1e-9 {
                let t = 3.0 / d.x;
                if (t * d.y).abs() <= 0.5 {
                    r = r.min(t);
                }
            }
            angles.push(a);
            ranges.push(r);
        }
        let scan = Scan { origin: Pose2::new(0.0, 0.0, 0.0), angles, ranges, max_range: 10.0 };
        let legs = detect_legs(&scan, &LegParams::default());
        assert_eq!(legs.len(), 1, "{legs:?}");
        assert!((legs[0].center - P2::new(1.0, 0.0)).norm() < 0.03);
        let empty = Scan { ranges: vec![10.0; n], ..scan };
        assert!(detect_legs(&empty, &LegParams::default()).is_empty());
    }

    fn hist() -> ColorHistogram {
        ColorHistogram::from_samples(&[[200, 30, 30]]).unwrap()
    }

    #[test]
    fn association_and_loss() {
        let t = PersonTrack::new(P2::new(1.0, 0.0), 0.0, hist());
        let p = TrackParams::default();
        let u = associate_track(&t, &[P2::new(1.1, 0.0), P2::new(3.0, 0.0)], 0.1, &p);
        assert_eq!(u.position, P2::new(1.1, 0.0));
        let mut m = t.clone();
        for k in 0..3 {
            assert_eq!(m.state, TrackState::Tracking);
            m = associate_track(&m, &[], 0.1 * k as f64, &p);
        }
        assert_eq!(m.state, TrackState::Lost);
        assert_eq!(m.trace_line(0.3), "track t=0.30 state=lost 1.000 0.000");
    }

    #[test]
    fn histogram_intersection() {
        let a = ColorHistogram::from_bins(2, 2, vec![0.5, 0.5, 0.0, 0.0]);
        let b = ColorHistogram::from_bins(2, 2, vec![0.0, 0.5, 0.5, 0.0]);
        let c = ColorHistogram::from_bins(2, 2, vec![0.0, 0.0, 0.5, 0.5]);
        assert_eq!(color_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(color_similarity(&a, &c).unwrap(), 0.0);
        assert_eq!(color_similarity(&a, &b).unwrap(), 0.5);
        assert!(color_similarity(&a, &hist()).is_err());
    }

    #[test]
    fn hsv_conversion() {
        assert_eq!(rgb_to_hs([255, 0, 0]), (0.0, 1.0));
        assert_eq!(rgb_to_hs([0, 255, 0]), (120.0, 1.0));
        assert_eq!(rgb_to_hs([0, 0, 255]), (240.0, 1.0));
        assert_eq!(rgb_to_hs([128, 128, 128]).1, 0.0);
    }

    #[test]
    fn reid_rules() {
        let red = hist();
        let blue = ColorHistogram::from_samples(&[[30, 30, 200]]).unwrap();
        let cand = |id: &str, h: &ColorHistogram, d: f64| ReidCandidate { id: id.into(), histogram: h.clone(), distance: d };
        assert_eq!(reidentify(&red, &[cand("a", &blue, 1.0), cand("b", &red, 3.0)], 0.6), Some("b".into()));
        assert_eq!(reidentify(&red, &[cand("a", &blue, 1.0)], 0.6), None);
        assert_eq!(reidentify(&red, &[cand("far", &red, 3.0), cand("near", &red, 1.0)], 0.6), Some("near".into()));
    }

    fn frames(f: impl Fn(f64) -> (P3, P3)) -> Vec<WaveFrame> {
        (0..10).map(|k| f(k as f64 * 0.1)).map(|(s, w)| WaveFrame { shoulder: s, wrist: w }).collect()
    }

    #[test]
    fn wave_cases() {
        let p = WaveParams::default();
        let s0 = P3::new(0.0, 0.0, 1.45);
        let wave = frames(|t| (s0, s0 + V3::new(0.0, 0.3 * (std::f64::consts::TAU * 2.0 * t).sin(), 0.25)));
        assert!(detect_wave(&wave, 0.1, &p));
        let still = frames(|_| (s0, s0 - V3::z() * 0.55));
        assert!(!detect_wave(&still, 0.1, &p));
        let walk = frames(|t| (s0 + V3::x() * t, s0 + V3::x() * t - V3::z() * 0.55));
        assert!(!detect_wave(&walk, 0.1, &p));
        assert!(!detect_wave(&wave[..4], 0.1, &p));
    }
}
