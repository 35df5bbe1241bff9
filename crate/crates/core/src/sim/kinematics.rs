//! Planar forward kinematics for the torso lift plus four revolute joints.
//!
//! Joint order: lift (m), arm flex, arm roll, wrist flex, wrist roll (rad).
//! Flex angles are measured from vertical-up; `-pi/2` points forward. Roll
//! joints do not move the tool point.

use crate::geom::P3;

pub const JOINT_LIMITS: [(f64, f64); 5] = [
    (0.0, 0.69),
    (-2.62, 0.0),
    (-2.09, 3.84),
    (-1.92, 1.22),
    (-1.92, 3.67),
];

pub const SHOULDER_FORWARD: f64 = 0.14;
pub const SHOULDER_HEIGHT: f64 = 0.34;
pub const UPPER_ARM: f64 = 0.345;
pub const WRIST_TO_TCP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmJoints(pub [f64; 5]);

impl ArmJoints {
    pub fn stowed() -> Self {
        ArmJoints([0.0, 0.0, 0.0, -1.57, 0.0])
    }

    /// Arm forward with the gripper pointing straight down.
    pub fn hand_down(lift: f64) -> Self {
        ArmJoints([lift, -std::f64::consts::FRAC_PI_2, 0.0, -std::f64::consts::FRAC_PI_2, 0.0]).clamped()
    }

    /// Arm forward with the gripper horizontal.
    pub fn hand_forward(lift: f64, roll: f64) -> Self {
        ArmJoints([lift, -std::f64::consts::FRAC_PI_2, 0.0, 0.0, roll]).clamped()
    }

    pub fn lift(&self) -> f64 {
        self.0[0]
    }

    pub fn wrist_roll(&self) -> f64 {
        self.0[4]
    }

    pub fn clamped(mut self) -> Self {
        for (v, (lo, hi)) in self.0.iter_mut().zip(JOINT_LIMITS) {
            *v = v.clamp(lo, hi);
        }
        self
    }

    pub fn within_limits(&self) -> bool {
        self.0.iter().zip(JOINT_LIMITS).all(|(v, (lo, hi))| *v >= lo && *v <= hi)
    }

    /// Angle of the gripper axis from vertical-up.
    pub fn hand_pitch(&self) -> f64 {
        self.0[1] + self.0[3]
    }
}

/// Tool point in the base frame (x forward, z up).
pub fn tcp_in_base(j: &ArmJoints) -> P3 {
    let flex = j.0[1];
    let hand = j.hand_pitch();
    let fwd = SHOULDER_FORWARD + UPPER_ARM * (-flex).sin() + WRIST_TO_TCP * (-hand).sin();
    let up = SHOULDER_HEIGHT + j.lift() + UPPER_ARM * flex.cos() + WRIST_TO_TCP * hand.cos();
    P3::new(fwd, 0.0, up)
}

/// Forward reach of the tool point in the hand-down posture.
pub fn hand_down_reach() -> f64 {
    SHOULDER_FORWARD + UPPER_ARM
}

/// Forward reach of the tool point in the hand-forward posture.
pub fn hand_forward_reach() -> f64 {
    SHOULDER_FORWARD + UPPER_ARM + WRIST_TO_TCP
}

/// Lift value placing a downward-pointing tool at height `z`, if reachable.
pub fn lift_for_hand_down(z: f64) -> Option<f64> {
    let lift = z - (SHOULDER_HEIGHT - WRIST_TO_TCP);
    (lift >= JOINT_LIMITS[0].0 - 1e-9 && lift <= JOINT_LIMITS[0].1 + 1e-9).then_some(lift.clamp(0.0, 0.69))
}

/// Lift value placing a forward-pointing tool at height `z`, if reachable.
pub fn lift_for_hand_forward(z: f64) -> Option<f64> {
    let lift = z - SHOULDER_HEIGHT;
    (lift >= JOINT_LIMITS[0].0 - 1e-9 && lift <= JOINT_LIMITS[0].1 + 1e-9).then_some(lift.clamp(0.0, 0.69))
}
