//! Grasp candidates from bounding boxes, collision and orientation filters,
//! standoff offsetting and the proportional hand-camera servo.
//!
//! Gripper frame: `z` is the approach axis (toward the object), `x` is the
//! gripper "up" direction, `y = z × x`. The origin sits between the
//! fingertips; the body box extends backward along `-z`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use thiserror::Error;

use crate::geom::{Aabb, P3, V3};
use crate::occupancy::OccupancyQuery;
use crate::sim::BaseVelocity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManipError {
    #[error("object box is degenerate")]
    DegenerateBox,
    #[error("n_rolls must be at least 1")]
    NoRolls,
    #[error("standoff offset must be positive, got {0}")]
    NonPositiveOffset(f64),
    #[error("pose has no standoff to close")]
    NoStandoff,
    #[error("servo loop gain {0} outside (0, 1)")]
    UnstableGain(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperModel {
    /// Extents along gripper x (up), y, z (approach).
    pub body: V3,
    pub finger_span: f64,
    pub approach: V3,
    /// How far past the face the fingertip center is placed.
    pub insertion_depth: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self { body: V3::new(0.04, 0.12, 0.14), finger_span: 0.12, approach: V3::z(), insertion_depth: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Face {
    Top,
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Face {
    pub const ALL: [Face; 5] = [Face::Top, Face::PosX, Face::NegX, Face::PosY, Face::NegY];

    pub fn normal(self) -> V3 {
        match self {
            Face::Top => V3::z(),
            Face::PosX => V3::x(),
            Face::NegX => -V3::x(),
            Face::PosY => V3::y(),
            Face::NegY => -V3::y(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPose {
    pub position: P3,
    pub orientation: UnitQuaternion<f64>,
    pub face: Face,
    pub roll_index: usize,
    pub standoff: f64,
}

impl GraspPose {
    pub fn approach(&self) -> V3 {
        self.orientation * V3::z()
    }

    pub fn up(&self) -> V3 {
        self.orientation * V3::x()
    }

    /// Same pose rotated half a turn about the approach axis. A parallel
    /// gripper grasps identically, but the hand is upside down.
    pub fn flipped(&self) -> GraspPose {
        let half = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(self.approach()), std::f64::consts::PI);
        GraspPose { orientation: half * self.orientation, ..*self }
    }
}

fn frame(approach: V3, up0: V3, roll: f64) -> UnitQuaternion<f64> {
    let up = up0 * roll.cos() + approach.cross(&up0) * roll.sin();
    let y = approach.cross(&up);
    let m = Matrix3::from_columns(&[up, y, approach]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// Top plus four side faces, `n_rolls` evenly spaced rolls in `[0, pi)` each.
pub fn generate_grasp_poses(aabb: &Aabb, gripper: &GripperModel, n_rolls: usize) -> Result<Vec<GraspPose>, ManipError> {
    if aabb.is_degenerate() {
        return Err(ManipError::DegenerateBox);
    }
    if n_rolls == 0 {
        return Err(ManipError::NoRolls);
    }
    let c = aabb.center();
    let half = aabb.extents() / 2.0;
    let mut out = Vec::with_capacity(5 * n_rolls);
    for face in Face::ALL {
        let n = face.normal();
        let reach = n.abs().dot(&half);
        // Stay short of the centroid so the approach still points at it.
        let depth = gripper.insertion_depth.min(reach / 2.0);
        let position = c + n * (reach - depth);
        let approach = -n;
        let up0 = if face == Face::Top { V3::x() } else { V3::z() };
        for r in 0..n_rolls {
            let roll = r as f64 * std::f64::consts::PI / n_rolls as f64;
            out.push(GraspPose { position, orientation: frame(approach, up0, roll), face, roll_index: r, standoff: 0.0 });
        }
    }
    Ok(out)
}

/// Oriented box: center, axes as columns, half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: P3,
    pub axes: Matrix3<f64>,
    pub half: V3,
}

impl Obb {
    pub fn bounding_aabb(&self) -> Aabb {
        let r = self.axes.abs() * self.half;
        Aabb::new(self.center - r, self.center + r)
    }

    /// Separating-axis test; touching boxes do not overlap.
    pub fn overlaps(&self, b: &Aabb) -> bool {
        let bc = b.center();
        let bh = b.extents() / 2.0;
        let t = bc - self.center;
        let mut axes: Vec<V3> = vec![V3::x(), V3::y(), V3::z()];
        for j in 0..3 {
            axes.push(self.axes.column(j).into_owned());
        }
        for i in 0..3 {
            for j in 0..3 {
                let l = V3::ith(i, 1.0).cross(&self.axes.column(j));
                if l.norm_squared() > 1e-12 {
                    axes.push(l.normalize());
                }
            }
        }
        for l in axes {
            let ra: f64 = (0..3).map(|j| self.half[j] * self.axes.column(j).dot(&l).abs()).sum();
            let rb: f64 = (0..3).map(|i| bh[i] * l[i].abs()).sum();
            if t.dot(&l).abs() >= ra + rb - 1e-9 {
                return false;
            }
        }
        true
    }
}

/// Gripper body at `pose`, extended backward by `sweep` to cover the final
/// straight approach.
pub fn swept_body(pose: &GraspPose, gripper: &GripperModel, sweep: f64) -> Obb {
    let r = pose.orientation.to_rotation_matrix().into_inner();
    let len = gripper.body.z + sweep;
    let local_center = V3::new(0.0, 0.0, -len / 2.0);
    Obb { center: pose.position + r * local_center, axes: r, half: V3::new(gripper.body.x / 2.0, gripper.body.y / 2.0, len / 2.0) }
}

/// Keeps poses whose swept body hits no occupied voxel outside the target.
/// Order is preserved.
pub fn filter_colliding<Q: OccupancyQuery + ?Sized>(
    poses: &[GraspPose],
    gripper: &GripperModel,
    map: &Q,
    threshold: f64,
    target: &Aabb,
    sweep: f64,
) -> Vec<GraspPose> {
    let res = map.resolution();
    let own = target.inflate(res / 2.0);
    let half = V3::repeat(res / 2.0);
    poses
        .iter()
        .filter(|p| {
            let body = swept_body(p, gripper, sweep);
            let region = body.bounding_aabb().inflate(res);
            !map.occupied_voxels_in(&region, threshold)
                .iter()
                .filter(|c| !own.contains(c))
                .any(|c| body.overlaps(&Aabb::new(c - half, c + half)))
        })
        .copied()
        .collect()
}

/// Keeps poses whose up vector points down by more than `cos_tol`.
pub fn filter_orientation(poses: &[GraspPose], cos_tol: f64) -> Vec<GraspPose> {
    poses.iter().filter(|p| p.up().z < -cos_tol).copied().collect()
}

/// Retracts a pose along its approach axis.
pub fn standoff_pose(pose: &GraspPose, offset: f64) -> Result<GraspPose, ManipError> {
    if !(offset > 0.0) {
        return Err(ManipError::NonPositiveOffset(offset));
    }
    Ok(GraspPose { position: pose.position - pose.approach() * offset, standoff: pose.standoff + offset, ..*pose })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproachPath {
    pub points: Vec<P3>,
    pub target: GraspPose,
}

impl ApproachPath {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Straight line from a standoff pose back onto the grasp, `steps` segments.
pub fn close_gap(pose: &GraspPose, steps: usize) -> Result<ApproachPath, ManipError> {
    if !(pose.standoff > 0.0) {
        return Err(ManipError::NoStandoff);
    }
    let steps = steps.max(1);
    let delta = pose.approach() * pose.standoff;
    let points = (0..=steps).map(|i| pose.position + delta * (i as f64 / steps as f64)).collect();
    Ok(ApproachPath { points, target: GraspPose { position: pose.position + delta, standoff: 0.0, ..*pose } })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServoOutput {
    Done,
    /// `image` is `gain * error` in image axes; `base` is the mapped command.
    Move { image: (f64, f64), base: BaseVelocity },
}

impl ServoOutput {
    pub fn velocity(&self) -> BaseVelocity {
        match self {
            ServoOutput::Done => BaseVelocity::ZERO,
            ServoOutput::Move { base, .. } => *base,
        }
    }
}

/// Proportional law on the pixel error between target and image center.
/// With the hand pointing down, image right is the robot's right and image
/// down is backward.
pub fn servo_step(error: (f64, f64), gain: f64, tolerance: f64) -> ServoOutput {
    let (ex, ey) = error;
    if ex.hypot(ey) <= tolerance {
        return ServoOutput::Done;
    }
    let image = (gain * ex, gain * ey);
    ServoOutput::Move { image, base: BaseVelocity { vx: -image.1, vy: -image.0, wz: 0.0 } }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoConfig {
    pub gain: f64,
    pub tolerance: f64,
    pub pixels_per_meter: f64,
    pub dt: f64,
}

impl ServoConfig {
    pub fn loop_gain(&self) -> f64 {
        self.gain * self.pixels_per_meter * self.dt
    }

    pub fn validate(&self) -> Result<(), ManipError> {
        let k = self.loop_gain();
        if k > 0.0 && k < 1.0 {
            Ok(())
        } else {
            Err(ManipError::UnstableGain(k))
        }
    }

    /// Steps until the error magnitude falls to the tolerance.
    pub fn predicted_steps(&self, e0: f64) -> u32 {
        if e0 <= self.tolerance {
            return 0;
        }
        ((self.tolerance / e0).ln() / (1.0 - self.loop_gain()).ln()).ceil() as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupancy::{OccupancyOctree, OctreeConfig};

    fn cube(c: P3, s: f64) -> Aabb {
        Aabb::from_center_extents(c, V3::repeat(s))
    }

    #[test]
    fn candidate_counts() {
        let g = GripperModel::default();
        let b = cube(P3::new(0.0, 0.0, 0.5), 1.0);
        assert_eq!(generate_grasp_poses(&b, &g, 4).unwrap().len(), 20);
        let one = generate_grasp_poses(&b, &g, 1).unwrap();
        assert_eq!(one.len(), 5);
        assert!(one.iter().all(|p| p.roll_index == 0));
        assert_eq!(generate_grasp_poses(&b, &g, 0), Err(ManipError::NoRolls));
        let flat = Aabb::new(P3::origin(), P3::new(1.0, 1.0, 0.0));
        assert_eq!(generate_grasp_poses(&flat, &g, 1), Err(ManipError::DegenerateBox));
    }

    #[test]
    fn poses_are_normalized_and_point_inward() {
        let g = GripperModel::default();
        let b = Aabb::new(P3::new(1.0, 1.0, 0.0), P3::new(1.06, 1.08, 0.3));
        for p in generate_grasp_poses(&b, &g, 4).unwrap() {
            assert!((p.orientation.coords.norm() - 1.0).abs() < 1e-9);
            assert!(p.face != Face::Top || p.approach().z < -0.999);
            let to_c = (b.center() - p.position).normalize();
            assert!(to_c.dot(&p.approach()) > 1.0 - 1e-9);
            assert!(p.up().dot(&p.approach()).abs() < 1e-12);
            if p.face != Face::Top {
                // Tall thin box: side grasps at mid height.
                assert!((p.position.z - 0.15).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rolls_evenly_spaced() {
        let g = GripperModel::default();
        let b = cube(P3::new(0.0, 0.0, 0.5), 0.2);
        let ps = generate_grasp_poses(&b, &g, 4).unwrap();
        let side: Vec<_> = ps.iter().filter(|p| p.face == Face::PosX).collect();
        for (k, p) in side.iter().enumerate() {
            let ang = k as f64 * std::f64::consts::FRAC_PI_4;
            assert!((p.up().z - ang.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn orientation_filter() {
        let mk = |up: V3| {
            let approach = if up.x.abs() > 0.5 { V3::y() } else { V3::x() };
            GraspPose { position: P3::origin(), orientation: frame(approach, up, 0.0), face: Face::PosX, roll_index: 0, standoff: 0.0 }
        };
        let ps = [mk(-V3::z()), mk(V3::z()), mk(V3::x())];
        let kept = filter_orientation(&ps, 0.5);
        assert_eq!(kept.len(), 1);
        assert!((kept[0].up().z + 1.0).abs() < 1e-12);
        // Flipping a side pose turns it upside down.
        let g = GripperModel::default();
        let side = generate_grasp_poses(&cube(P3::new(0.0, 0.0, 0.5), 0.2), &g, 1).unwrap()[1];
        assert!((side.flipped().up().z + 1.0).abs() < 1e-12);
    }

    #[test]
    fn standoff_round_trip() {
        let g = GripperModel::default();
        let p = generate_grasp_poses(&cube(P3::new(1.0, 2.0, 0.5), 0.2), &g, 2).unwrap()[3];
        assert_eq!(standoff_pose(&p, 0.0), Err(ManipError::NonPositiveOffset(0.0)));
        let s = standoff_pose(&p, 0.05).unwrap();
        let s2 = standoff_pose(&standoff_pose(&p, 0.02).unwrap(), 0.03).unwrap();
        assert!((s.position - s2.position).norm() < 1e-12);
        let path = close_gap(&s, 10).unwrap();
        assert!((path.length() - 0.05).abs() < 1e-12);
        assert!((path.target.position - p.position).norm() < 1e-9);
        assert!((path.points[5] - (s.position + (p.position - s.position) / 2.0)).norm() < 1e-12);
        assert_eq!(close_gap(&p, 1), Err(ManipError::NoStandoff));
    }

    fn occupied_map(boxes: &[Aabb]) -> OccupancyOctree {
        let mut t = OccupancyOctree::new(P3::new(-1.0, -1.0, -1.0), 6, OctreeConfig::default());
        for b in boxes {
            for i in 0..64 {
                for j in 0..64 {
                    for k in 0..64 {
                        let key = crate::occupancy::VoxelKey::new(i, j, k);
                        if b.contains(&t.center_of(&key)) {
                            for _ in 0..5 {
                                t.update_voxel(key, true).unwrap();
                            }
                        }
                    }
                }
            }
        }
        t
    }

    #[test]
    fn isolated_cube_keeps_all() {
        let target = Aabb::new(P3::new(0.0, 0.0, 0.0), P3::new(0.1, 0.1, 0.1));
        let map = occupied_map(&[target]);
        let g = GripperModel::default();
        let ps = generate_grasp_poses(&target, &g, 4).unwrap();
        assert_eq!(filter_colliding(&ps, &g, &map, 0.7, &target, 0.05).len(), 20);
    }

    #[test]
    fn wall_and_lip_remove_faces() {
        let target = Aabb::new(P3::new(0.0, 0.0, 0.0), P3::new(0.1, 0.1, 0.1));
        let wall = Aabb::new(P3::new(0.1, -0.5, 0.0), P3::new(0.2, 0.5, 0.8));
        let g = GripperModel::default();
        let ps = generate_grasp_poses(&target, &g, 4).unwrap();
        let kept = filter_colliding(&ps, &g, &occupied_map(&[target, wall]), 0.7, &target, 0.05);
        assert!(kept.iter().all(|p| p.face != Face::PosX));
        assert_eq!(kept.iter().filter(|p| p.face == Face::NegX).count(), 4);

        let lip = Aabb::new(P3::new(-0.3, -0.3, 0.15), P3::new(0.4, 0.4, 0.2));
        let kept = filter_colliding(&ps, &g, &occupied_map(&[target, lip]), 0.7, &target, 0.05);
        assert!(kept.iter().all(|p| p.face != Face::Top));
    }

    #[test]
    fn servo_law() {
        assert_eq!(servo_step((0.0, 0.0), 0.01, 2.0), ServoOutput::Done);
        match servo_step((40.0, -20.0), 0.01, 2.0) {
            ServoOutput::Move { image, base } => {
                assert!((image.0 - 0.4).abs() < 1e-12 && (image.1 + 0.2).abs() < 1e-12);
                assert!((base.vx - 0.2).abs() < 1e-12 && (base.vy + 0.4).abs() < 1e-12);
            }
            ServoOutput::Done => panic!("expected motion"),
        }
    }

    #[test]
    fn servo_closed_form_matches_recurrence() {
        let cfg = ServoConfig { gain: 0.01, tolerance: 2.0, pixels_per_meter: 400.0, dt: 0.1 };
        cfg.validate().unwrap();
        let mut e = 100.0;
        let mut n = 0;
        while e > cfg.tolerance {
            e -= cfg.gain * e * cfg.pixels_per_meter * cfg.dt;
            n += 1;
        }
        assert_eq!(n, cfg.predicted_steps(100.0));
        assert!(ServoConfig { gain: 0.03, ..cfg }.validate().is_err());
    }
}
