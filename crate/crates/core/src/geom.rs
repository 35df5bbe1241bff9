//! Small geometric primitives shared by the simulator and the algorithms.

use nalgebra::{Point2, Point3, Vector2, Vector3};

pub type P2 = Point2<f64>;
pub type P3 = Point3<f64>;
pub type V2 = Vector2<f64>;
pub type V3 = Vector3<f64>;

/// Planar pose: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> P2 {
        P2::new(self.x, self.y)
    }

    pub fn distance_to(&self, other: &Pose2) -> f64 {
        (self.position() - other.position()).norm()
    }

    /// Maps a point given in this pose's local frame to the parent frame.
    pub fn transform(&self, local: P2) -> P2 {
        let (s, c) = self.theta.sin_cos();
        P2::new(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
        )
    }

    /// Inverse of [`Pose2::transform`].
    pub fn inverse_transform(&self, world: P2) -> P2 {
        let (s, c) = self.theta.sin_cos();
        let dx = world.x - self.x;
        let dy = world.y - self.y;
        P2::new(c * dx + s * dy, -s * dx + c * dy)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Axis-aligned box in 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: P3,
    pub max: P3,
}

impl Aabb {
    pub fn new(min: P3, max: P3) -> Self {
        Self { min, max }
    }

    pub fn from_center_extents(center: P3, extents: V3) -> Self {
        let h = extents / 2.0;
        Self {
            min: center - h,
            max: center + h,
        }
    }

    pub fn center(&self) -> P3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extents(&self) -> V3 {
        self.max - self.min
    }

    pub fn is_degenerate(&self) -> bool {
        let e = self.extents();
        !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) || !e.iter().all(|v| v.is_finite())
    }

    pub fn contains(&self, p: &P3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.min.x && x <= self.max.x && y >= self.min.y && y <= self.max.y
    }

    pub fn inflate(&self, margin: f64) -> Aabb {
        let m = V3::repeat(margin);
        Aabb::new(self.min - m, self.max + m)
    }

    pub fn translate(&self, d: V3) -> Aabb {
        Aabb::new(self.min + d, self.max + d)
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    /// Volume of the intersection with `other`; zero when they only touch.
    pub fn overlap_volume(&self, other: &Aabb) -> f64 {
        let lo = self.min.sup(&other.min);
        let hi = self.max.inf(&other.max);
        let d = hi - lo;
        if d.x <= 0.0 || d.y <= 0.0 || d.z <= 0.0 {
            0.0
        } else {
            d.x * d.y * d.z
        }
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    /// Slab test. Returns the parametric entry/exit interval of `origin + t*dir`,
    /// clipped to `[0, t_max]`.
    pub fn ray_interval(&self, origin: &P3, dir: &V3, t_max: f64) -> Option<(f64, f64)> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..3 {
            if dir[i].abs() < 1e-300 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let mut a = (self.min[i] - origin[i]) * inv;
            let mut b = (self.max[i] - origin[i]) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }

    /// True if the open segment `a -> b` passes through the box.
    pub fn segment_hits(&self, a: &P3, b: &P3) -> bool {
        let d = b - a;
        self.ray_interval(a, &d, 1.0).is_some()
    }

    /// The footprint of the box in the XY plane.
    pub fn footprint(&self) -> Rect {
        Rect {
            min: P2::new(self.min.x, self.min.y),
            max: P2::new(self.max.x, self.max.y),
        }
    }
}

/// Axis-aligned rectangle in the XY plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: P2,
    pub max: P2,
}

impl Rect {
    pub fn new(min: P2, max: P2) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &P2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn center(&self) -> P2 {
        nalgebra::center(&self.min, &self.max)
    }

    /// Distance from `p` to the closest point of the rectangle (0 inside).
    pub fn distance_to(&self, p: &P2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    pub fn inflate(&self, m: f64) -> Rect {
        Rect::new(self.min - V2::repeat(m), self.max + V2::repeat(m))
    }

    /// First parameter in `[0, t_max]` where `origin + t*dir` enters the rectangle.
    pub fn ray_entry(&self, origin: &P2, dir: &V2, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..2 {
            if dir[i].abs() < 1e-300 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let mut a = (self.min[i] - origin[i]) * inv;
            let mut b = (self.max[i] - origin[i]) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }

    /// First time a disc of `radius` moving from `origin` along `dir` touches the
    /// rectangle. Exact: the Minkowski sum is a rounded rectangle.
    pub fn disc_sweep_entry(&self, origin: &P2, dir: &V2, radius: f64, t_max: f64) -> Option<f64> {
        let grown = self.inflate(radius);
        let t = grown.ray_entry(origin, dir, t_max)?;
        let hit = origin + dir * t;
        let in_x = hit.x >= self.min.x && hit.x <= self.max.x;
        let in_y = hit.y >= self.min.y && hit.y <= self.max.y;
        if in_x || in_y {
            return Some(t);
        }
        // Corner region: intersect with the corner circle instead.
        let cx = if hit.x < self.min.x { self.min.x } else { self.max.x };
        let cy = if hit.y < self.min.y { self.min.y } else { self.max.y };
        ray_circle_entry(origin, dir, &P2::new(cx, cy), radius, t_max)
    }
}

/// First parameter in `[0, t_max]` at which the ray is inside the circle.
pub fn ray_circle_entry(origin: &P2, dir: &V2, center: &P2, radius: f64, t_max: f64) -> Option<f64> {
    let f = origin - center;
    let a = dir.dot(dir);
    if a == 0.0 {
        return (f.norm() <= radius).then_some(0.0);
    }
    let b = 2.0 * f.dot(dir);
    let c = f.dot(&f) - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    (t >= 0.0 && t <= t_max).then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn pose_transform_round_trip() {
        let p = Pose2::new(1.0, 2.0, 0.7);
        let q = P2::new(0.3, -0.4);
        let back = p.inverse_transform(p.transform(q));
        assert!((back - q).norm() < 1e-12);
    }

    #[test]
    fn disc_sweep_face_and_corner() {
        let r = Rect::new(P2::new(1.0, -1.0), P2::new(2.0, 1.0));
        let t = r.disc_sweep_entry(&P2::new(0.0, 0.0), &V2::new(1.0, 0.0), 0.25, 10.0);
        assert!((t.unwrap() - 0.75).abs() < 1e-12);
        // Passing just outside the corner square but within the rounded corner.
        let t = r.disc_sweep_entry(&P2::new(0.0, 1.2), &V2::new(1.0, 0.0), 0.25, 10.0);
        let expected = 1.0 - (0.25f64 * 0.25 - 0.2 * 0.2).sqrt();
        assert!((t.unwrap() - expected).abs() < 1e-12);
        // Misses the rounded corner entirely.
        assert!(r.disc_sweep_entry(&P2::new(0.0, 1.26), &V2::new(1.0, 0.0), 0.25, 10.0).is_none());
    }

    #[test]
    fn aabb_segment() {
        let b = Aabb::new(P3::new(0.0, 0.0, 0.0), P3::new(1.0, 1.0, 1.0));
        assert!(b.segment_hits(&P3::new(-1.0, 0.5, 0.5), &P3::new(2.0, 0.5, 0.5)));
        assert!(!b.segment_hits(&P3::new(-1.0, 0.5, 1.5), &P3::new(2.0, 0.5, 1.5)));
    }
}
