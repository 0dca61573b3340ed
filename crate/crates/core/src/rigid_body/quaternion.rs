use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Below this rotation angle the log map switches to its first-order series.
const SMALL_ANGLE: f64 = 1e-6;

/// Unit quaternion, scalar first, Hamilton convention.
///
/// Every constructor and operation returns a normalized quaternion with
/// `w >= 0`. When `w` is exactly zero the first nonzero vector component is
/// made positive so that each rotation has a single representative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a quaternion from raw components and normalizes it.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }.normalize()
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self::new(c, s * a.x, s * a.y, s * a.z)
    }

    /// Exponential map: rotation vector (axis times angle) to quaternion.
    pub fn from_rotation_vector(v: &Vector3<f64>) -> Self {
        let angle = v.norm();
        if angle < SMALL_ANGLE {
            return Self::new(1.0, 0.5 * v.x, 0.5 * v.y, 0.5 * v.z);
        }
        Self::from_axis_angle(v, angle)
    }

    /// Pure rotation about world z.
    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = (0.5 * yaw).sin_cos();
        Self::new(c, 0.0, 0.0, s)
    }

    /// Z-Y-X Euler angles (roll, pitch, yaw).
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::from_yaw(yaw)
            * Self::from_axis_angle(&Vector3::y(), pitch)
            * Self::from_axis_angle(&Vector3::x(), roll)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalize(self) -> Self {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Self::IDENTITY;
        }
        let mut q = Quaternion {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        };
        let flip = if q.w != 0.0 {
            q.w < 0.0
        } else {
            [q.x, q.y, q.z]
                .into_iter()
                .find(|c| *c != 0.0)
                .is_some_and(|c| c < 0.0)
        };
        if flip {
            q = Quaternion {
                w: -q.w,
                x: -q.x,
                y: -q.y,
                z: -q.z,
            };
        }
        q
    }

    pub fn conjugate(&self) -> Self {
        Quaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
        .normalize()
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    /// Hamilton product without renormalization.
    pub(crate) fn raw_mul(a: &Quaternion, b: &Quaternion) -> Quaternion {
        Quaternion {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }

    /// Rotates `v` by this quaternion: `R(q) v`.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let u = self.vector();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    /// Applies the inverse rotation: `R(q)^T v`.
    pub fn rotate_inverse(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let u = -self.vector();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Log map on SO(3): the rotation vector with angle in `[0, pi]`.
    pub fn log(&self) -> Vector3<f64> {
        let q = self.normalize();
        let v = q.vector();
        let s = v.norm();
        let angle = 2.0 * s.atan2(q.w);
        if angle < SMALL_ANGLE {
            // first-order series, w > 0 here
            return 2.0 * v / q.w;
        }
        v * (angle / s)
    }

    /// Z-Y-X Euler angles `(roll, pitch, yaw)`, each in `(-pi, pi]`.
    pub fn to_euler(&self) -> (f64, f64, f64) {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        let pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0).asin();
        let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
        (wrap_half_open(roll), wrap_half_open(pitch), wrap_half_open(yaw))
    }

    /// Angle of the rotation in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        self.log().norm()
    }

    /// True when both quaternions describe the same rotation within `tol`.
    pub fn same_rotation(&self, other: &Quaternion, tol: f64) -> bool {
        let d = self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z;
        1.0 - d.abs() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        Quaternion::raw_mul(&self, &rhs).normalize()
    }
}

/// Maps an angle to `(-pi, pi]`.
pub fn wrap_half_open(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn identity_product() {
        let q = Quaternion::from_axis_angle(&Vector3::new(0.3, -1.0, 2.0), 1.1);
        assert!((Quaternion::IDENTITY * q).same_rotation(&q, 1e-15));
        assert!((q * q.conjugate()).same_rotation(&Quaternion::IDENTITY, 1e-15));
    }

    #[test]
    fn quarter_turns_compose_to_half_turn() {
        let q = Quaternion::from_axis_angle(&Vector3::z(), FRAC_PI_2);
        let r = q * q;
        // oracle: Rz(90) * Rz(90) = diag(-1, -1, 1)
        let expected = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r.rotation_matrix() - expected).norm() < 1e-12);
        assert!(r.same_rotation(&Quaternion::new(0.0, 0.0, 0.0, 1.0), 1e-12));
    }

    #[test]
    fn rotate_matches_matrix() {
        let q = Quaternion::from_axis_angle(&Vector3::z(), FRAC_PI_2);
        assert!(close(&q.rotate(&Vector3::x()), &Vector3::y(), 1e-12));
        let p = Quaternion::new(0.3, -0.2, 0.9, 0.1);
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert!(close(&p.rotate(&v), &(p.rotation_matrix() * v), 1e-12));
        assert!(close(&p.rotate_inverse(&p.rotate(&v)), &v, 1e-12));
        assert!(close(&Quaternion::IDENTITY.rotate(&v), &v, 0.0));
    }

    #[test]
    fn log_of_simple_rotations() {
        assert_eq!(Quaternion::IDENTITY.log(), Vector3::zeros());
        let q = Quaternion::from_axis_angle(&Vector3::x(), FRAC_PI_2);
        assert!(close(&q.log(), &Vector3::new(FRAC_PI_2, 0.0, 0.0), 1e-12));
        let half = Quaternion::new(0.0, 0.0, 1.0, 0.0);
        assert!(close(&half.log(), &Vector3::new(0.0, PI, 0.0), 1e-12));
        let tiny = Quaternion::from_rotation_vector(&Vector3::new(1e-8, -2e-8, 0.0));
        assert!(close(&tiny.log(), &Vector3::new(1e-8, -2e-8, 0.0), 1e-20));
    }

    #[test]
    fn canonical_sign() {
        let q = Quaternion::new(-0.5, 0.5, 0.5, 0.5);
        assert!(q.w > 0.0);
        let q = Quaternion::new(0.0, 0.0, -1.0, 0.0);
        assert_eq!(q, Quaternion::new(0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn euler_round_trip() {
        let q = Quaternion::from_euler(0.2, -0.4, 2.9);
        let (r, p, y) = q.to_euler();
        assert!((r - 0.2).abs() < 1e-12 && (p + 0.4).abs() < 1e-12 && (y - 2.9).abs() < 1e-12);
        assert_eq!(wrap_half_open(-PI), PI);
    }
}
