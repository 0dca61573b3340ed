use nalgebra::{Matrix4, Vector4};

use crate::rigid_body::{RotorThrusts, VehicleParams, Wrench};

/// Smallest |det A| accepted for the force–torque mixer.
pub const MIN_MIXER_DET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum AllocationError {
    #[error("mixer matrix is singular (|det A| = {0:e})")]
    SingularMixer(f64),
}

/// Inverse of the force–torque mixer.
pub fn mixer_inverse(params: &VehicleParams) -> Result<Matrix4<f64>, AllocationError> {
    let a = params.mixer_matrix();
    let det = a.determinant();
    if det.abs() < MIN_MIXER_DET {
        return Err(AllocationError::SingularMixer(det.abs()));
    }
    a.try_inverse()
        .ok_or(AllocationError::SingularMixer(det.abs()))
}

/// Largest `s` in `[0, 1]` keeping `base + s * dir` inside `[0, max]`.
fn feasible_scale(base: &Vector4<f64>, dir: &Vector4<f64>, max: f64) -> f64 {
    let mut s: f64 = 1.0;
    for (b, d) in base.iter().zip(dir.iter()) {
        if *d > 0.0 {
            s = s.min((max - b) / d);
        } else if *d < 0.0 {
            s = s.min(-b / d);
        }
    }
    s.clamp(0.0, 1.0)
}

/// Solves `A f = w` for the rotor thrusts.
///
/// When the exact solution leaves `[0, f_max]` the collective thrust is kept
/// and the roll/pitch torque, then the yaw torque, are scaled back until every
/// rotor is feasible.
pub fn allocate(wrench: &Wrench, params: &VehicleParams) -> Result<RotorThrusts, AllocationError> {
    let inv = mixer_inverse(params)?;
    let f_max = params.rotor_thrust_max;
    let exact = inv * wrench.as_vector();
    if exact.iter().all(|f| (0.0..=f_max).contains(f)) {
        return Ok(RotorThrusts(exact.into()));
    }

    let thrust = wrench.thrust.clamp(0.0, 4.0 * f_max);
    let base = inv * Vector4::new(thrust, 0.0, 0.0, 0.0);
    let roll_pitch = inv * Vector4::new(0.0, wrench.torque.x, wrench.torque.y, 0.0);
    let yaw = inv * Vector4::new(0.0, 0.0, 0.0, wrench.torque.z);

    let with_rp = base + roll_pitch * feasible_scale(&base, &roll_pitch, f_max);
    let f = with_rp + yaw * feasible_scale(&with_rp, &yaw, f_max);
    Ok(RotorThrusts(f.into()).clamped(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn symmetric_thrust() {
        let p = VehicleParams::default();
        let w = Wrench {
            thrust: 0.4,
            torque: Vector3::zeros(),
        };
        let f = allocate(&w, &p).unwrap();
        for fi in f.0 {
            assert!((fi - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let p = VehicleParams::default();
        let a = p.mixer_matrix();
        let inv = mixer_inverse(&p).unwrap();
        assert!((a * inv - Matrix4::identity()).norm() < 1e-12);
        let w = Wrench {
            thrust: 0.5,
            torque: Vector3::new(2e-4, -3e-4, 1e-4),
        };
        let f = allocate(&w, &p).unwrap();
        assert!((f.wrench(&p).as_vector() - w.as_vector()).norm() < 1e-9);
    }

    #[test]
    fn saturation_keeps_collective_thrust() {
        let p = VehicleParams::default();
        let w = Wrench {
            thrust: 0.55,
            torque: Vector3::new(9e-4, 9e-4, 9e-4),
        };
        let f = allocate(&w, &p).unwrap();
        assert!(f.0.iter().all(|fi| (0.0..=p.rotor_thrust_max).contains(fi)));
        assert!((f.total() - 0.55).abs() < 1e-12);
        let applied = f.wrench(&p);
        // roll/pitch keep their direction, yaw is sacrificed first
        assert!(applied.torque.x > 0.0 && applied.torque.y > 0.0);
        assert!((applied.torque.x - applied.torque.y).abs() < 1e-15);
    }

    #[test]
    fn singular_mixer_is_rejected() {
        let p = VehicleParams {
            torque_per_thrust: 0.0,
            ..Default::default()
        };
        let w = Wrench {
            thrust: 0.4,
            torque: Vector3::zeros(),
        };
        assert!(matches!(allocate(&w, &p), Err(AllocationError::SingularMixer(_))));
    }
}
