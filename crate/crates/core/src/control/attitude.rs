//! Geometric construction of the commanded attitude from a thrust direction
//! and a heading reference.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::rigid_body::Quaternion;

/// `1 + e3 . v_b` below this is treated as an inverted thrust request.
const INVERTED_EPS: f64 = 1e-8;
/// Minimum horizontal extent of a gate normal usable as a heading.
const MIN_HORIZONTAL_NORMAL: f64 = 1e-6;

/// Intermediate and final quantities of one attitude construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttitudeCommand {
    /// Minimal rotation taking body z onto the thrust direction.
    pub tilt: Quaternion,
    /// Rotation about the tilted z axis fixing the heading.
    pub yaw: Quaternion,
    /// Combined relative command `tilt ⊗ yaw`.
    pub relative: Quaternion,
    /// Commanded thrust direction, world frame.
    pub thrust_direction: Vector3<f64>,
    pub yaw_ref: f64,
}

/// Minimal rotation, relative to the current body frame, that aligns body z
/// with `thrust_dir` (a world-frame unit vector).
pub fn tilt_quaternion(q_cur: &Quaternion, thrust_dir: &Vector3<f64>) -> Quaternion {
    let v_b = q_cur.rotate_inverse(thrust_dir);
    let w = 1.0 + v_b.z;
    if w < INVERTED_EPS {
        return Quaternion {
            w: 0.0,
            x: 1.0,
            y: 0.0,
            z: 0.0,
        };
    }
    // e3 x v_b
    Quaternion::new(w, -v_b.y, v_b.x, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("gate normal {normal:?} has no horizontal component")]
pub struct DegenerateNormal {
    pub normal: [f64; 3],
}

/// Heading aligned with the horizontal projection of the gate normal, with
/// the normal flipped to point from the drone toward the gate.
pub fn yaw_reference(
    normal: &Vector3<f64>,
    gate_center: &Vector3<f64>,
    drone: &Vector3<f64>,
) -> Result<f64, DegenerateNormal> {
    if normal.x.hypot(normal.y) <= MIN_HORIZONTAL_NORMAL {
        return Err(DegenerateNormal {
            normal: [normal.x, normal.y, normal.z],
        });
    }
    let n = resolve_normal(normal, gate_center, drone);
    Ok(n.y.atan2(n.x))
}

/// Returns `normal` or its negation, whichever has `n . (gate - drone) >= 0`.
pub fn resolve_normal(
    normal: &Vector3<f64>,
    gate_center: &Vector3<f64>,
    drone: &Vector3<f64>,
) -> Vector3<f64> {
    if normal.dot(&(gate_center - drone)) >= 0.0 {
        *normal
    } else {
        -normal
    }
}

/// Yaw correction applied after the tilt, and the combined relative command.
pub fn yaw_quaternion(
    q_cur: &Quaternion,
    tilt: &Quaternion,
    yaw_ref: f64,
) -> (Quaternion, Quaternion) {
    let q_int = *q_cur * *tilt;
    let (s, c) = yaw_ref.sin_cos();
    // with the thrust axis below the horizon the lateral reference flips,
    // so the forward axis rather than the tail keeps the heading
    let side = if q_int.rotate(&Vector3::z()).z < 0.0 { -1.0 } else { 1.0 };
    let n_ref = Vector3::new(s, -c, 0.0) * side;
    let n_bar = q_int.rotate_inverse(&n_ref);
    let psi = n_bar.x.atan2(-n_bar.y);
    let (hs, hc) = (0.5 * psi).sin_cos();
    let yaw = Quaternion::new(hc, 0.0, 0.0, hs);
    (yaw, *tilt * yaw)
}

/// Full attitude construction.
pub fn attitude_command(
    q_cur: &Quaternion,
    thrust_dir: &Vector3<f64>,
    yaw_ref: f64,
) -> AttitudeCommand {
    let tilt = tilt_quaternion(q_cur, thrust_dir);
    let (yaw, relative) = yaw_quaternion(q_cur, &tilt, yaw_ref);
    AttitudeCommand {
        tilt,
        yaw,
        relative,
        thrust_direction: *thrust_dir,
        yaw_ref,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    #[test]
    fn aligned_thrust_needs_no_tilt() {
        let t = tilt_quaternion(&Quaternion::IDENTITY, &Vector3::z());
        assert_eq!(t, Quaternion::IDENTITY);
    }

    #[test]
    fn inverted_thrust_uses_half_turn_about_x() {
        let t = tilt_quaternion(&Quaternion::IDENTITY, &-Vector3::z());
        assert_eq!(t, Quaternion::new(0.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn sideways_thrust_is_quarter_turn_about_y() {
        let t = tilt_quaternion(&Quaternion::IDENTITY, &Vector3::x());
        let expected = Quaternion::new(FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2, 0.0);
        assert!(t.same_rotation(&expected, 1e-15));
        assert!((t.rotate(&Vector3::z()) - Vector3::x()).norm() < 1e-9);
    }

    #[test]
    fn yaw_reference_cases() {
        let gate = Vector3::new(2.0, 0.0, 1.0);
        let behind = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(yaw_reference(&Vector3::x(), &gate, &behind).unwrap(), 0.0);
        let psi = yaw_reference(&Vector3::y(), &Vector3::new(0.0, 2.0, 0.0), &Vector3::zeros());
        assert!((psi.unwrap() - FRAC_PI_2).abs() < 1e-15);
        // normal points back at the drone, so it gets flipped
        assert_eq!(yaw_reference(&-Vector3::x(), &gate, &behind).unwrap(), 0.0);
        assert!(yaw_reference(&Vector3::z(), &gate, &behind).is_err());
    }

    #[test]
    fn level_frame_commands() {
        let c = attitude_command(&Quaternion::IDENTITY, &Vector3::z(), 0.0);
        assert!(c.relative.same_rotation(&Quaternion::IDENTITY, 1e-15));
        let c = attitude_command(&Quaternion::IDENTITY, &Vector3::z(), FRAC_PI_2);
        let expected = Quaternion::from_yaw(FRAC_PI_2);
        assert!(c.relative.same_rotation(&expected, 1e-15));
        let c = attitude_command(&Quaternion::IDENTITY, &Vector3::z(), PI);
        assert!(c.relative.same_rotation(&Quaternion::from_yaw(PI), 1e-15));
    }
}
