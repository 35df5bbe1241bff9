//! Simulated sensors. Every function here is a pure function of a [`World`]
//! snapshot; noise is keyed by (seed, clock, entity) so repeated calls agree.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::World;
use crate::geom::{Aabb, Pose2, Rect, P2, P3, V2, V3};
use crate::noise::{hash_str, rng_for};

const TAG_DETECT: u64 = 0xD37;
const TAG_PIXEL: u64 = 0x91C;
const TAG_SKELETON: u64 = 0x5CE;
const TAG_PROFILE: u64 = 0x9F0;

fn clock_key(clock: f64) -> u64 {
    // Round to microseconds so accumulated float error does not change noise.
    (clock * 1e6).round() as i64 as u64
}

/// Planar laser scan. Angles are relative to the robot heading.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub origin: Pose2,
    pub angles: Vec<f64>,
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

impl Scan {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Endpoint of beam `i` in the robot frame.
    pub fn point_local(&self, i: usize) -> P2 {
        let (s, c) = self.angles[i].sin_cos();
        P2::new(self.ranges[i] * c, self.ranges[i] * s)
    }

    pub fn point_world(&self, i: usize) -> P2 {
        self.origin.transform(self.point_local(i))
    }

    pub fn is_hit(&self, i: usize) -> bool {
        self.ranges[i] < self.max_range
    }
}

enum Blocker {
    Rect(Rect),
    Circle(P2, f64),
}

/// Ray-casts the planar scanner against static geometry, objects crossing the
/// scan plane (including a carried object), and people's legs.
pub fn lidar_scan(world: &World) -> Scan {
    let cfg = &world.config;
    let h = cfg.scanner_height;
    let mut blockers: Vec<Blocker> = world
        .solid_boxes()
        .filter(|b| b.min.z <= h && b.max.z >= h)
        .map(|b| Blocker::Rect(b.footprint()))
        .collect();
    blockers.extend(
        world
            .objects
            .iter()
            .filter(|o| o.aabb.min.z <= h && o.aabb.max.z >= h)
            .map(|o| Blocker::Rect(o.aabb.footprint())),
    );
    for p in &world.people {
        for leg in p.joints(world.clock).legs {
            blockers.push(Blocker::Circle(leg, cfg.leg_radius));
        }
    }

    let origin = world.robot.base_pose;
    let o = origin.position();
    let n = (cfg.scan_fov / cfg.scan_resolution).round() as usize + 1;
    let mut angles = Vec::with_capacity(n);
    let mut ranges = Vec::with_capacity(n);
    for i in 0..n {
        let a = -cfg.scan_fov / 2.0 + i as f64 * cfg.scan_resolution;
        let th = origin.theta + a;
        let dir = V2::new(th.cos(), th.sin());
        let mut r = cfg.scan_max_range;
        for b in &blockers {
            let t = match b {
                Blocker::Rect(rect) => rect.ray_entry(&o, &dir, r),
                Blocker::Circle(c, rad) => crate::geom::ray_circle_entry(&o, &dir, c, *rad, r),
            };
            if let Some(t) = t {
                r = r.min(t);
            }
        }
        angles.push(a);
        ranges.push(r.max(1e-3));
    }
    Scan { origin, angles, ranges, max_range: cfg.scan_max_range }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CameraKind {
    Head,
    Hand,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub hfov: f64,
    pub max_range: f64,
}

impl CameraModel {
    pub fn head() -> Self {
        Self { width: 640, height: 480, hfov: 58f64.to_radians(), max_range: 6.0 }
    }

    pub fn hand() -> Self {
        Self { width: 640, height: 480, hfov: 60f64.to_radians(), max_range: 2.0 }
    }

    pub fn focal_px(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.hfov / 2.0).tan()
    }

    pub fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }
}

/// Camera position plus optical (forward), image-right and image-down axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: P3,
    pub forward: V3,
    pub right: V3,
    pub down: V3,
}

impl CameraPose {
    /// Pixel coordinates and depth of a world point, if in front of the camera.
    pub fn project(&self, model: &CameraModel, p: &P3) -> Option<(f64, f64, f64)> {
        let v = p - self.position;
        let z = v.dot(&self.forward);
        if z <= 1e-3 {
            return None;
        }
        let f = model.focal_px();
        let (cx, cy) = model.center();
        Some((cx + f * v.dot(&self.right) / z, cy + f * v.dot(&self.down) / z, z))
    }

    pub fn in_frustum(&self, model: &CameraModel, p: &P3) -> bool {
        match self.project(model, p) {
            Some((u, v, z)) => {
                u >= 0.0 && v >= 0.0 && u < model.width as f64 && v < model.height as f64 && z <= model.max_range
            }
            None => false,
        }
    }

    /// Unit ray through pixel `(u, v)`.
    pub fn pixel_ray(&self, model: &CameraModel, u: f64, v: f64) -> V3 {
        let f = model.focal_px();
        let (cx, cy) = model.center();
        (self.forward + self.right * ((u - cx) / f) + self.down * ((v - cy) / f)).normalize()
    }
}

pub const HEAD_HEIGHT: f64 = 1.0;

pub fn camera_pose(world: &World, kind: CameraKind) -> CameraPose {
    let r = &world.robot;
    let pose = r.base_pose;
    match kind {
        CameraKind::Head => {
            let yaw = pose.theta + r.head_pan;
            let tilt = r.head_tilt;
            let flat = V3::new(yaw.cos(), yaw.sin(), 0.0);
            let forward = flat * tilt.cos() + V3::z() * tilt.sin();
            let right = V3::new(yaw.sin(), -yaw.cos(), 0.0);
            let down = forward.cross(&right);
            CameraPose { position: P3::new(pose.x, pose.y, HEAD_HEIGHT), forward, right, down }
        }
        CameraKind::Hand => {
            let pitch = r.arm.hand_pitch();
            let fwd_axis = V3::new(pose.theta.cos(), pose.theta.sin(), 0.0);
            let forward = fwd_axis * (-pitch).sin() + V3::z() * pitch.cos();
            let right = V3::new(pose.theta.sin(), -pose.theta.cos(), 0.0);
            let down = forward.cross(&right);
            CameraPose { position: r.tcp_world(), forward, right, down }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRect {
    pub min_u: f64,
    pub min_v: f64,
    pub max_u: f64,
    pub max_v: f64,
}

impl PixelRect {
    pub fn center(&self) -> (f64, f64) {
        ((self.min_u + self.max_u) / 2.0, (self.min_v + self.max_v) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_label: String,
    pub center_3d: P3,
    /// Object size estimated from depth.
    pub extents: V3,
    pub bbox_2d: PixelRect,
    pub camera: CameraKind,
}

fn segment_blocked<'a>(world: &'a World, from: &P3, to: &P3, extra: impl Iterator<Item = &'a Aabb>) -> bool {
    world.solid_boxes().chain(extra).any(|b| b.segment_hits(from, to))
}

/// Object detector stand-in: one detection per unoccluded object whose
/// center projects inside the image.
pub fn camera_detect(world: &World, kind: CameraKind) -> Vec<Detection> {
    let cfg = &world.config;
    let model = match kind {
        CameraKind::Head => cfg.head_camera,
        CameraKind::Hand => cfg.hand_camera,
    };
    let cam = camera_pose(world, kind);
    let held = world.robot.held_object;
    let center_noise = Normal::new(0.0, cfg.detection_sigma.max(0.0)).expect("finite sigma");
    let pixel_noise = Normal::new(0.0, cfg.pixel_sigma.max(0.0)).expect("finite sigma");
    let cam_tag = match kind {
        CameraKind::Head => 1,
        CameraKind::Hand => 2,
    };
    let mut out = Vec::new();
    for obj in &world.objects {
        if Some(obj.id) == held {
            continue;
        }
        let c = obj.aabb.center();
        if !cam.in_frustum(&model, &c) {
            continue;
        }
        let others = world
            .objects
            .iter()
            .filter(|o| o.id != obj.id && Some(o.id) != held)
            .map(|o| &o.aabb);
        if segment_blocked(world, &cam.position, &c, others) {
            continue;
        }
        let mut rng = rng_for(&[world.rng_seed, clock_key(world.clock), obj.id.0 as u64, TAG_DETECT, cam_tag]);
        let noise = V3::new(
            center_noise.sample(&mut rng),
            center_noise.sample(&mut rng),
            center_noise.sample(&mut rng),
        );
        let mut prng = rng_for(&[world.rng_seed, clock_key(world.clock), obj.id.0 as u64, TAG_PIXEL, cam_tag]);
        let (du, dv) = (pixel_noise.sample(&mut prng), pixel_noise.sample(&mut prng));
        let Some(bbox) = project_box(&cam, &model, &obj.aabb, du, dv) else { continue };
        out.push(Detection {
            class_label: obj.class_label.clone(),
            center_3d: c + noise,
            extents: obj.aabb.extents(),
            bbox_2d: bbox,
            camera: kind,
        });
    }
    out
}

fn project_box(cam: &CameraPose, model: &CameraModel, b: &Aabb, du: f64, dv: f64) -> Option<PixelRect> {
    let (w, h) = (model.width as f64, model.height as f64);
    let mut r = PixelRect { min_u: f64::INFINITY, min_v: f64::INFINITY, max_u: f64::NEG_INFINITY, max_v: f64::NEG_INFINITY };
    for i in 0..8 {
        let p = P3::new(
            if i & 1 == 0 { b.min.x } else { b.max.x },
            if i & 2 == 0 { b.min.y } else { b.max.y },
            if i & 4 == 0 { b.min.z } else { b.max.z },
        );
        // Corners behind the camera clamp to the image border.
        let (u, v) = match cam.project(model, &p) {
            Some((u, v, _)) => (u, v),
            None => continue,
        };
        r.min_u = r.min_u.min(u + du);
        r.max_u = r.max_u.max(u + du);
        r.min_v = r.min_v.min(v + dv);
        r.max_v = r.max_v.max(v + dv);
    }
    if !r.min_u.is_finite() {
        return None;
    }
    r.min_u = r.min_u.clamp(0.0, w);
    r.max_u = r.max_u.clamp(0.0, w);
    r.min_v = r.min_v.clamp(0.0, h);
    r.max_v = r.max_v.clamp(0.0, h);
    Some(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    /// Ground-truth identity, used for logging and evaluation only.
    pub person_id: String,
    pub torso: P3,
    pub shoulder: P3,
    pub wrist: P3,
    pub torso_px: (f64, f64),
    pub shoulder_px: (f64, f64),
    pub wrist_px: (f64, f64),
    /// RGB samples from the torso region.
    pub torso_samples: Vec<[u8; 3]>,
    pub has_drink: bool,
}

pub const TORSO_SAMPLES: usize = 64;
const TORSO_COLOR_SIGMA: f64 = 6.0;

/// Pose-estimator stand-in for people whose torso is visible to the head camera.
pub fn skeleton_detect(world: &World) -> Vec<Skeleton> {
    let cfg = &world.config;
    let model = cfg.head_camera;
    let cam = camera_pose(world, CameraKind::Head);
    let jn = Normal::new(0.0, cfg.joint_sigma.max(0.0)).expect("finite sigma");
    let cn = Normal::new(0.0, TORSO_COLOR_SIGMA).expect("finite sigma");
    let mut out = Vec::new();
    for p in &world.people {
        let j = p.joints(world.clock);
        if !cam.in_frustum(&model, &j.torso) || segment_blocked(world, &cam.position, &j.torso, std::iter::empty()) {
            continue;
        }
        let mut rng = rng_for(&[world.rng_seed, clock_key(world.clock), hash_str(&p.id), TAG_SKELETON]);
        let mut jitter = |q: P3| q + V3::new(jn.sample(&mut rng), jn.sample(&mut rng), jn.sample(&mut rng));
        let torso = jitter(j.torso);
        let shoulder = jitter(j.shoulder);
        let wrist = jitter(j.wrist);
        let px = |q: &P3| cam.project(&model, q).map(|(u, v, _)| (u, v)).unwrap_or((-1.0, -1.0));
        let torso_samples = (0..TORSO_SAMPLES)
            .map(|_| {
                let mut c = [0u8; 3];
                for (k, ch) in c.iter_mut().enumerate() {
                    *ch = (p.torso_color[k] as f64 + cn.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
                }
                c
            })
            .collect();
        out.push(Skeleton {
            person_id: p.id.clone(),
            torso_px: px(&torso),
            shoulder_px: px(&shoulder),
            wrist_px: px(&wrist),
            torso,
            shoulder,
            wrist,
            torso_samples,
            has_drink: p.has_drink,
        });
    }
    out
}

/// Depth returns from the head camera on a `cols x rows` pixel grid, as world
/// points. Rays that hit nothing within range are dropped.
pub fn depth_points(world: &World, cols: u32, rows: u32) -> Vec<P3> {
    let model = world.config.head_camera;
    let cam = camera_pose(world, CameraKind::Head);
    let held = world.robot.held_object;
    let boxes: Vec<Aabb> = world
        .solid_boxes()
        .copied()
        .chain(world.objects.iter().filter(|o| Some(o.id) != held).map(|o| o.aabb))
        .collect();
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let u = (c as f64 + 0.5) * model.width as f64 / cols as f64;
            let v = (r as f64 + 0.5) * model.height as f64 / rows as f64;
            let dir = cam.pixel_ray(&model, u, v);
            let mut t = model.max_range;
            if dir.z < -1e-9 {
                t = t.min(-cam.position.z / dir.z);
            }
            let mut hit = dir.z < -1e-9 && t < model.max_range;
            for b in &boxes {
                if let Some((t0, _)) = b.ray_interval(&cam.position, &dir, t) {
                    if t0 < t {
                        t = t0;
                        hit = true;
                    }
                }
            }
            if hit {
                out.push(cam.position + dir * t);
            }
        }
    }
    out
}

/// Top-surface samples on a grid in front of the robot, looking along
/// `heading` (world frame). Used to search for horizontal edges.
pub fn surface_profile(world: &World, heading: f64, near: f64, far: f64, half_width: f64, step: f64) -> Vec<P3> {
    let o = world.robot.base_pose.position();
    let fwd = V2::new(heading.cos(), heading.sin());
    let left = V2::new(-heading.sin(), heading.cos());
    let sigma = Normal::new(0.0, 0.003).expect("finite sigma");
    let mut rng = rng_for(&[world.rng_seed, clock_key(world.clock), (heading * 1e6).round() as i64 as u64, TAG_PROFILE]);
    let mut out = Vec::new();
    let nf = ((far - near) / step).floor() as i64;
    let nl = (half_width / step).floor() as i64;
    for i in 0..=nf {
        for j in -nl..=nl {
            let p = o + fwd * (near + i as f64 * step) + left * (j as f64 * step);
            if p.x < 0.0 || p.y < 0.0 || p.x > world.width || p.y > world.height {
                continue;
            }
            let z = world.top_surface(p.x, p.y) + sigma.sample(&mut rng);
            // Keep the rng stream aligned regardless of the surface hit.
            let _: f64 = rng.random();
            out.push(P3::new(p.x, p.y, z));
        }
    }
    out
}

/// Obstacle points seen by the head camera, projected onto the floor in the
/// robot frame. Covers geometry taller than the scanner plane.
pub fn projected_obstacles(world: &World, spacing: f64) -> Vec<P2> {
    let model = world.config.head_camera;
    let pose = world.robot.base_pose;
    let half = model.hfov / 2.0;
    let yaw = pose.theta + world.robot.head_pan;
    let mut out = Vec::new();
    let boxes = world
        .solid_boxes()
        .copied()
        .chain(world.objects.iter().filter(|o| Some(o.id) != world.robot.held_object).map(|o| o.aabb));
    for b in boxes.filter(|b| b.max.z > world.config.scanner_height) {
        let r = b.footprint();
        let nx = ((r.max.x - r.min.x) / spacing).ceil().max(1.0) as usize;
        let ny = ((r.max.y - r.min.y) / spacing).ceil().max(1.0) as usize;
        for i in 0..=nx {
            for j in 0..=ny {
                let p = P2::new(
                    r.min.x + (r.max.x - r.min.x) * i as f64 / nx as f64,
                    r.min.y + (r.max.y - r.min.y) * j as f64 / ny as f64,
                );
                let d = p - pose.position();
                let dist = d.norm();
                if dist > model.max_range.min(3.5) || dist < 1e-6 {
                    continue;
                }
                let bearing = crate::geom::wrap_angle(d.y.atan2(d.x) - yaw);
                if bearing.abs() > half {
                    continue;
                }
                out.push(pose.inverse_transform(p));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{load_arena, ObjectId, RobotState, SimPerson, TimedWaypoint};

    fn room() -> World {
        load_arena("arena 10 10\nwall 0 0 10 0 2\nwall 0 10 10 10 2\nwall 0 0 0 10 2\nwall 10 0 10 10 2\nrobot 5 5 0\n").unwrap()
    }

    #[test]
    fn empty_room_ranges_match_analytic_walls() {
        let w = room();
        let s = lidar_scan(&w);
        assert_eq!(s.len(), 481);
        for i in 0..s.len() {
            let a = s.angles[i];
            let (c, sn) = (a.cos(), a.sin());
            // Inner wall faces are at 0.05 and 9.95.
            let tx = if c > 1e-12 { (9.95 - 5.0) / c } else if c < -1e-12 { (0.05 - 5.0) / c } else { f64::INFINITY };
            let ty = if sn > 1e-12 { (9.95 - 5.0) / sn } else if sn < -1e-12 { (0.05 - 5.0) / sn } else { f64::INFINITY };
            let expected = tx.min(ty).min(10.0);
            assert!((s.ranges[i] - expected).abs() < 1e-9, "beam {i}: {} vs {expected}", s.ranges[i]);
        }
    }

    #[test]
    fn legs_produce_two_short_clusters() {
        let mut w = World::empty(10.0, 10.0);
        w.robot = RobotState::at(Pose2::new(2.0, 5.0, 0.0));
        w.people.push(SimPerson {
            id: "p".into(),
            trajectory: vec![TimedWaypoint { t: 0.0, x: 3.0, y: 5.0 }],
            torso_color: [0, 0, 0],
            wave_script: vec![],
            has_drink: false,
        });
        let s = lidar_scan(&w);
        let hits: Vec<usize> = (0..s.len()).filter(|&i| s.is_hit(i)).collect();
        assert!(!hits.is_empty());
        // Brute force: every hit beam points at one of the leg circles.
        for &i in &hits {
            let p = s.point_world(i);
            let d0 = (p - P2::new(3.0, 5.1)).norm();
            let d1 = (p - P2::new(3.0, 4.9)).norm();
            assert!((d0.min(d1) - 0.07).abs() < 1e-9);
        }
        let left = hits.iter().filter(|&&i| s.angles[i] > 0.0).count();
        let right = hits.iter().filter(|&&i| s.angles[i] < 0.0).count();
        assert!(left > 3 && right > 3);
        let gap = hits.windows(2).filter(|w| w[1] != w[0] + 1).count();
        assert_eq!(gap, 1, "exactly two contiguous clusters");
    }

    fn bag_world(carry_lift: f64) -> World {
        let mut w = load_arena("arena 10 10\nobject bag 5 5 0.2 0.3 0.3 0.35 graspable sticky\nrobot 4.515 5 0\n").unwrap();
        w.robot.arm = crate::sim::ArmJoints::hand_down(0.3);
        let (mut w, _) = w.step(0.1, &crate::sim::Command { gripper: Some(crate::sim::GripperCommand::Close), ..Default::default() });
        assert_eq!(w.robot.held_object, Some(ObjectId(0)));
        w.robot.arm = crate::sim::ArmJoints::hand_down(carry_lift);
        w.step(0.1, &crate::sim::Command::default()).0
    }

    #[test]
    fn carried_bag_occludes_until_raised() {
        let low = bag_world(0.0);
        assert!(low.robot.carry_height < low.config.scanner_height);
        let s = lidar_scan(&low);
        let front: Vec<f64> = (0..s.len()).filter(|&i| s.angles[i].abs() < 0.2).map(|i| s.ranges[i]).collect();
        assert!(front.iter().all(|&r| r < 0.6), "{front:?}");
        let high = bag_world(0.69);
        assert!(high.robot.carry_height > high.config.scanner_height);
        let s = lidar_scan(&high);
        assert!((0..s.len()).filter(|&i| s.angles[i].abs() < 0.2).all(|i| !s.is_hit(i)));
    }

    fn table_world() -> World {
        load_arena("arena 10 10\nfurniture table 7 5 0 1 1 0.7\nobject cup 6.8 5 0.7 0.08 0.08 0.1\nrobot 5 5 0\n").unwrap()
    }

    #[test]
    fn detection_is_deterministic() {
        let w = table_world().with_seed(3);
        let a = camera_detect(&w, CameraKind::Head);
        let b = camera_detect(&w, CameraKind::Head);
        assert_eq!(a.len(), 1);
        assert_eq!(a, b);
        let c = camera_detect(&table_world().with_seed(4), CameraKind::Head);
        assert_ne!(a[0].center_3d, c[0].center_3d);
    }

    #[test]
    fn object_behind_wall_not_detected() {
        let mut w = table_world();
        w.static_boxes.push(crate::sim::StaticBox {
            name: "wall".into(),
            aabb: Aabb::new(P3::new(6.0, 3.0, 0.0), P3::new(6.1, 7.0, 2.0)),
        });
        assert!(camera_detect(&w, CameraKind::Head).is_empty());
    }

    #[test]
    fn centered_object_in_hand_camera() {
        let mut w = load_arena("arena 10 10\nobject lid 5 5 0.4 0.3 0.3 0.03 graspable\nrobot 4.515 5 0\n").unwrap();
        w.robot.arm = crate::sim::ArmJoints::hand_down(0.6);
        w.config.pixel_sigma = 0.0;
        let d = camera_detect(&w, CameraKind::Hand);
        assert_eq!(d.len(), 1);
        let (u, v) = d[0].bbox_2d.center();
        assert!((u - 320.0).abs() < 1e-6 && (v - 240.0).abs() < 1e-6, "{u} {v}");
        w.config.pixel_sigma = 2.0;
        let (u, v) = camera_detect(&w, CameraKind::Hand)[0].bbox_2d.center();
        assert!((u - 320.0).abs() < 10.0 && (v - 240.0).abs() < 10.0);
    }

    #[test]
    fn skeletons_echo_world_state() {
        let mut w = load_arena(
            "arena 10 10\nrobot 2 5 0\nperson a color 200 10 10 drink waypoints 0,5,5\nperson b color 10 200 10 wave 0 100 waypoints 0,5,6\nperson c color 1 1 1 waypoints 0,1,5\n",
        )
        .unwrap();
        w.robot.head_tilt = 0.0;
        let s = skeleton_detect(&w);
        let ids: Vec<&str> = s.iter().map(|k| k.person_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
        assert!(s[0].has_drink && !s[1].has_drink);
        let later = w.step(0.1, &crate::sim::Command::default()).0;
        let s2 = skeleton_detect(&later);
        assert!((s2[1].wrist - s[1].wrist).norm() > 0.05);
        w.robot.base_pose.theta = std::f64::consts::PI;
        assert!(skeleton_detect(&w).iter().all(|k| k.person_id == "c"));
    }
}
