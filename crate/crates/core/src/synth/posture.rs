//! Forward kinematics of the synthetic performer.
//!
//! A handful of scalar posture parameters (torso lean, reach towards the
//! handle, stance, gait, squat, arm raises) are mapped to the 17 joint
//! positions of the default topology. The performer faces -x, towards the
//! handle on the +x face of the box.

use crate::skeleton::{joint, Vec3};

const FORWARD: Vec3 = [-1.0, 0.0, 0.0];
const UP: Vec3 = [0.0, 0.0, 1.0];
const LEFT: Vec3 = [0.0, -1.0, 0.0];

const PELVIS_HEIGHT: f64 = 0.95;
const TORSO: f64 = 0.45;
const NECK_HEAD: f64 = 0.25;
const SHOULDER_HALF_WIDTH: f64 = 0.18;
const UPPER_ARM: f64 = 0.30;
const FOREARM: f64 = 0.27;
const HAND: f64 = 0.08;
const HIP_HALF_WIDTH: f64 = 0.10;
const THIGH: f64 = 0.45;
const SHIN: f64 = 0.42;
const FOOT_HEIGHT: f64 = 0.08;
const FOOT_HALF_WIDTH: f64 = 0.12;

/// Offset of the handle from the box reference point along x.
pub const HANDLE_DX: f64 = 0.30;
pub const HANDLE_HALF_WIDTH: f64 = 0.20;
pub const HANDLE_HEIGHT: f64 = 0.95;
/// Horizontal pelvis-to-handle distance for a unit-scale performer.
const STANDOFF: f64 = 0.40;

/// Scalar posture state; every field is zero in the neutral standing pose.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Posture {
    /// Torso pitch in radians; positive leans forward (towards -x).
    pub lean: f64,
    /// Torso roll in radians; positive bends towards the performer's left.
    pub side_bend: f64,
    /// 0 = arms hanging, 1 = both wrists on the handle.
    pub reach: f64,
    /// Right-foot offset along x in units of 0.25 m * scale (positive = behind).
    pub stance: f64,
    pub gait_phase: f64,
    /// Peak foot excursion of the stepping gait, metres.
    pub gait_amplitude: f64,
    /// 0..1 squat depth.
    pub squat: f64,
    /// 0..1 blend of both arms raised forward.
    pub arms_forward: f64,
    /// 0..1 blend of the right arm raised for waving.
    pub wave: f64,
    /// Lateral wave excursion, -1..1.
    pub wave_swing: f64,
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    if n < 1e-12 {
        a
    } else {
        scale(a, 1.0 / n)
    }
}

fn lerp(a: Vec3, b: Vec3, t: f64) -> Vec3 {
    add(a, scale(sub(b, a), t))
}

/// Places the middle joint of a two-link chain from `root` to `tip`, bending
/// towards `bend`. When the tip is out of reach the chain is stretched so the
/// tip position is always honoured.
fn two_link(root: Vec3, tip: Vec3, l1: f64, l2: f64, bend: Vec3) -> Vec3 {
    let d_vec = sub(tip, root);
    let d = norm(d_vec);
    if d < 1e-9 {
        return add(root, scale(normalize(bend), l1));
    }
    let u = scale(d_vec, 1.0 / d);
    if d >= l1 + l2 {
        return add(root, scale(d_vec, l1 / (l1 + l2)));
    }
    let mut n = sub(bend, scale(u, dot(bend, u)));
    if norm(n) < 1e-9 {
        n = sub(FORWARD, scale(u, dot(FORWARD, u)));
    }
    let n = normalize(n);
    let cos_a = ((l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d)).clamp(-1.0, 1.0);
    let sin_a = (1.0 - cos_a * cos_a).sqrt();
    add(root, add(scale(u, l1 * cos_a), scale(n, l1 * sin_a)))
}

/// World-frame handle grip point for one side (`side` = +1 left, -1 right).
pub fn handle_point(box_x: f64, side: f64) -> Vec3 {
    [box_x + HANDLE_DX, -side * HANDLE_HALF_WIDTH, HANDLE_HEIGHT]
}

/// Pelvis x position when standing at the handle of a box at `box_x`.
pub fn pelvis_x(box_x: f64, limb_scale: f64) -> f64 {
    box_x + HANDLE_DX + STANDOFF * limb_scale
}

/// Joint positions (world frame) for a posture next to a box at `box_x`.
pub fn joints(p: &Posture, box_x: f64, s: f64) -> Vec<Vec3> {
    let mut out = vec![[0.0; 3]; 17];
    let pelvis = [pelvis_x(box_x, s), 0.0, PELVIS_HEIGHT * s * (1.0 - 0.3 * p.squat)];
    out[joint::PELVIS] = pelvis;

    let torso_dir = normalize(add(
        add(scale(UP, p.lean.cos() * p.side_bend.cos()), scale(FORWARD, p.lean.sin())),
        scale(LEFT, p.side_bend.sin()),
    ));
    let chest = add(pelvis, scale(torso_dir, TORSO * s));
    out[joint::CHEST] = chest;
    out[joint::HEAD] = add(chest, scale(torso_dir, NECK_HEAD * s));

    let arms = [
        (1.0, joint::L_SHOULDER, joint::L_ELBOW, joint::L_WRIST, joint::L_HAND),
        (-1.0, joint::R_SHOULDER, joint::R_ELBOW, joint::R_WRIST, joint::R_HAND),
    ];
    for (side, sh, el, wr, ha) in arms {
        let lateral = scale(LEFT, side);
        let shoulder = add(
            add(chest, scale(lateral, SHOULDER_HALF_WIDTH * s)),
            scale(torso_dir, -0.03 * s),
        );
        let hang = add(
            add(shoulder, scale(UP, -(UPPER_ARM + FOREARM) * s * 0.97)),
            scale(FORWARD, 0.03 * s),
        );
        let mut wrist = lerp(hang, handle_point(box_x, side), p.reach.clamp(0.0, 1.0));
        let raised = add(add(shoulder, scale(FORWARD, 0.5 * s)), scale(UP, -0.05 * s));
        wrist = lerp(wrist, raised, p.arms_forward.clamp(0.0, 1.0));
        if side < 0.0 && p.wave > 0.0 {
            let wave_target = add(
                add(shoulder, scale(UP, 0.48 * s)),
                scale(lateral, (0.10 + 0.12 * p.wave_swing) * s),
            );
            wrist = lerp(wrist, wave_target, p.wave.clamp(0.0, 1.0));
        }
        let bend = add(scale(UP, -1.0), scale(FORWARD, -0.5));
        let elbow = two_link(shoulder, wrist, UPPER_ARM * s, FOREARM * s, bend);
        out[sh] = shoulder;
        out[el] = elbow;
        out[wr] = wrist;
        out[ha] = add(wrist, scale(normalize(sub(wrist, elbow)), HAND * s));
    }

    let legs = [
        (1.0, joint::L_HIP, joint::L_KNEE, joint::L_FOOT, 1.0),
        (-1.0, joint::R_HIP, joint::R_KNEE, joint::R_FOOT, -1.0),
    ];
    let step = p.gait_phase.sin();
    for (side, hp, kn, ft, gait_sign) in legs {
        let lateral = scale(LEFT, side);
        let hip = add(pelvis, scale(lateral, HIP_HALF_WIDTH * s));
        let mut foot = [
            pelvis[0] + gait_sign * p.gait_amplitude * step,
            lateral[1] * FOOT_HALF_WIDTH * s,
            FOOT_HEIGHT + 0.4 * p.gait_amplitude * (gait_sign * step).max(0.0),
        ];
        if side < 0.0 {
            foot[0] += 0.25 * s * p.stance;
        }
        out[hp] = hip;
        out[kn] = two_link(hip, foot, THIGH * s, SHIN * s, FORWARD);
        out[ft] = foot;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neutral_pose_is_upright_and_symmetric() {
        let j = joints(&Posture::default(), 0.0, 1.0);
        assert!(j[joint::HEAD][2] > j[joint::CHEST][2]);
        assert!(j[joint::CHEST][2] > j[joint::PELVIS][2]);
        assert!((j[joint::L_WRIST][1] + j[joint::R_WRIST][1]).abs() < 1e-12);
        assert!(j.iter().flatten().all(|c| c.is_finite()));
    }

    #[test]
    fn full_reach_puts_wrists_on_handle() {
        for s in [0.9, 1.0, 1.1] {
            for lean in [-0.3, 0.0, 0.3] {
                let p = Posture { reach: 1.0, lean, ..Default::default() };
                let j = joints(&p, 0.7, s);
                assert_eq!(j[joint::L_WRIST], handle_point(0.7, 1.0));
                assert_eq!(j[joint::R_WRIST], handle_point(0.7, -1.0));
            }
        }
    }

    #[test]
    fn forward_lean_moves_head_towards_minus_x() {
        let up = joints(&Posture::default(), 0.0, 1.0);
        let lean = joints(&Posture { lean: 0.3, ..Default::default() }, 0.0, 1.0);
        assert!(lean[joint::HEAD][0] < up[joint::HEAD][0]);
    }

    #[test]
    fn reachable_arm_keeps_segment_lengths() {
        let p = Posture { reach: 1.0, lean: 0.3, ..Default::default() };
        let j = joints(&p, 0.0, 0.9);
        let upper = norm(sub(j[joint::L_ELBOW], j[joint::L_SHOULDER]));
        let fore = norm(sub(j[joint::L_WRIST], j[joint::L_ELBOW]));
        assert!((upper - UPPER_ARM * 0.9).abs() < 1e-9);
        assert!((fore - FOREARM * 0.9).abs() < 1e-9);
    }
}
