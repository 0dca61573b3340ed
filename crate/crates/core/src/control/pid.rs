//! Cascaded PID velocity tracker modelled on the stock Crazyflie 2.1
//! controller: velocity PID → tilt/thrust → attitude PID → rate PID.
//!
//! Firmware gains are expressed in degrees and PWM counts. The defaults
//! below are those gains converted to SI for the 50 g airframe
//! (65535 PWM ↔ 4 × 0.15 N, 57.3 deg/rad, legacy quad-X mixer that halves
//! roll and pitch commands per motor).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::allocation::allocate;
use super::attitude::yaw_reference;
use super::{ControlFlags, ControlOutput, VelocityController, YawSource};
use crate::rigid_body::{
    wrap_half_open, RotorThrusts, SensorFrame, VehicleParams, VehicleState, Wrench, GRAVITY,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidAxis {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on the error integral, in error units × s.
    pub integral_limit: f64,
}

impl PidAxis {
    const fn new(kp: f64, ki: f64, kd: f64, integral_limit: f64) -> Self {
        Self {
            kp,
            ki,
            kd,
            integral_limit,
        }
    }

    fn is_valid(&self) -> bool {
        [self.kp, self.ki, self.kd, self.integral_limit]
            .iter()
            .all(|g| g.is_finite() && *g >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    /// Output m/s² per m/s.
    pub velocity_xy: PidAxis,
    pub velocity_z: PidAxis,
    /// Output rad/s per rad.
    pub attitude_rp: PidAxis,
    pub attitude_yaw: PidAxis,
    /// Output N·m per rad/s.
    pub rate_rp: PidAxis,
    pub rate_yaw: PidAxis,
    /// Roll/pitch command limit, rad.
    pub tilt_limit: f64,
    /// Per-axis torque magnitude bound, N·m.
    pub torque_sat: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        Self {
            // vx/vy: 25 deg/(m/s), 1 deg/m
            velocity_xy: PidAxis::new(25.0 * deg * GRAVITY, 1.0 * deg * GRAVITY, 0.0, 2.0),
            // vz: 25 and 15 thrust units with thrustScale 1000
            velocity_z: PidAxis::new(4.578, 2.747, 0.0, 2.0),
            // roll/pitch 6/3/0, yaw 6/1/0.35
            attitude_rp: PidAxis::new(6.0, 3.0, 0.0, 20.0 * deg),
            attitude_yaw: PidAxis::new(6.0, 1.0, 0.35, 360.0 * deg),
            // roll/pitch rate 250/500/2.5, yaw rate 120/16.7/0
            rate_rp: PidAxis::new(2.133e-3, 4.266e-3, 2.133e-5, 33.3 * deg),
            rate_yaw: PidAxis::new(3.755e-4, 5.226e-5, 0.0, 166.7 * deg),
            tilt_limit: 20.0 * deg,
            torque_sat: 9.49e-4,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<(), String> {
        let axes = [
            self.velocity_xy,
            self.velocity_z,
            self.attitude_rp,
            self.attitude_yaw,
            self.rate_rp,
            self.rate_yaw,
        ];
        if !axes.iter().all(PidAxis::is_valid) {
            return Err("PID gains and limits must be finite and non-negative".into());
        }
        if !(self.tilt_limit > 0.0 && self.tilt_limit < std::f64::consts::FRAC_PI_2) {
            return Err("tilt_limit must lie in (0, pi/2)".into());
        }
        if !(self.torque_sat > 0.0) {
            return Err("torque_sat must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PidTerm {
    integral: f64,
    prev_error: Option<f64>,
}

impl PidTerm {
    fn update(&mut self, gains: &PidAxis, error: f64, dt: f64) -> f64 {
        let lim = gains.integral_limit;
        self.integral = (self.integral + error * dt).clamp(-lim, lim);
        let deriv = self.prev_error.map_or(0.0, |p| (error - p) / dt);
        self.prev_error = Some(error);
        gains.kp * error + gains.ki * self.integral + gains.kd * deriv
    }
}

#[derive(Debug, Clone)]
pub struct PidController {
    params: VehicleParams,
    gains: PidGains,
    velocity: [PidTerm; 3],
    attitude: [PidTerm; 3],
    rate: [PidTerm; 3],
    yaw_ref: f64,
}

impl PidController {
    pub fn new(params: VehicleParams, gains: PidGains) -> Result<Self, String> {
        gains.validate()?;
        Ok(Self {
            params,
            gains,
            velocity: Default::default(),
            attitude: Default::default(),
            rate: Default::default(),
            yaw_ref: 0.0,
        })
    }

    pub fn gains(&self) -> &PidGains {
        &self.gains
    }

    /// Largest absolute value held by any integrator.
    pub fn max_integral(&self) -> f64 {
        self.velocity
            .iter()
            .chain(&self.attitude)
            .chain(&self.rate)
            .map(|t| t.integral.abs())
            .fold(0.0, f64::max)
    }
}

impl VelocityController for PidController {
    fn reset(&mut self, initial: &VehicleState) {
        self.velocity = Default::default();
        self.attitude = Default::default();
        self.rate = Default::default();
        self.yaw_ref = initial.attitude.to_euler().2;
    }

    fn step(
        &mut self,
        v_des: &Vector3<f64>,
        yaw: &YawSource,
        state: &VehicleState,
        sensors: &SensorFrame,
        dt: f64,
    ) -> ControlOutput {
        let g = &self.gains;
        let mut flags = ControlFlags::default();
        let e_v = v_des - state.velocity;
        let ax = self.velocity[0].update(&g.velocity_xy, e_v.x, dt);
        let ay = self.velocity[1].update(&g.velocity_xy, e_v.y, dt);
        let az = self.velocity[2].update(&g.velocity_z, e_v.z, dt);

        let (roll, pitch, heading) = state.attitude.to_euler();
        let (s, c) = heading.sin_cos();
        let a_fwd = c * ax + s * ay;
        let a_left = -s * ax + c * ay;
        let pitch_des = a_fwd.atan2(GRAVITY).clamp(-g.tilt_limit, g.tilt_limit);
        let roll_des = (-a_left.atan2(GRAVITY)).clamp(-g.tilt_limit, g.tilt_limit);
        let tilt_cos = (roll.cos() * pitch.cos()).max(0.5);
        let thrust = (self.params.mass * (GRAVITY + az) / tilt_cos)
            .clamp(0.0, self.params.collective_limit());

        match yaw {
            YawSource::Hold => {}
            YawSource::Heading(h) => self.yaw_ref = *h,
            YawSource::Gate { normal, center } => {
                match yaw_reference(normal, center, &state.position) {
                    Ok(psi) => self.yaw_ref = psi,
                    Err(_) => flags.degenerate_normal = true,
                }
            }
        }

        let rate_des = Vector3::new(
            self.attitude[0].update(&g.attitude_rp, roll_des - roll, dt),
            self.attitude[1].update(&g.attitude_rp, pitch_des - pitch, dt),
            self.attitude[2].update(&g.attitude_yaw, wrap_half_open(self.yaw_ref - heading), dt),
        );
        let e_rate = rate_des - sensors.body_rate;
        let sat = g.torque_sat;
        let torque = Vector3::new(
            self.rate[0].update(&g.rate_rp, e_rate.x, dt),
            self.rate[1].update(&g.rate_rp, e_rate.y, dt),
            self.rate[2].update(&g.rate_yaw, e_rate.z, dt),
        )
        .map(|t| t.clamp(-sat, sat));

        let wrench = Wrench { thrust, torque };
        match allocate(&wrench, &self.params) {
            Ok(rotors) if rotors.0.iter().all(|f| f.is_finite()) => ControlOutput {
                rotors,
                wrench,
                flags,
            },
            _ => {
                flags.fallback_hover = true;
                ControlOutput {
                    rotors: RotorThrusts::hover(&self.params),
                    wrench: Wrench {
                        thrust: self.params.mass * GRAVITY,
                        torque: Vector3::zeros(),
                    },
                    flags,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigid_body::Quaternion;

    #[test]
    fn hover_wrench_at_equilibrium() {
        let params = VehicleParams::default();
        let mut pid = PidController::new(params.clone(), PidGains::default()).unwrap();
        let state = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0));
        pid.reset(&state);
        let sensors = SensorFrame {
            specific_force: Vector3::new(0.0, 0.0, GRAVITY),
            body_rate: Vector3::zeros(),
            angular_accel_raw: Vector3::zeros(),
            specific_thrust: Vector3::new(0.0, 0.0, GRAVITY),
            torque: Vector3::zeros(),
        };
        for _ in 0..10 {
            let out = pid.step(&Vector3::zeros(), &YawSource::Hold, &state, &sensors, 0.002);
            assert!((out.wrench.thrust - params.mass * GRAVITY).abs() < 0.01 * params.mass * GRAVITY);
            assert_eq!(out.wrench.torque, Vector3::zeros());
        }
    }

    #[test]
    fn integrators_are_clamped() {
        let params = VehicleParams::default();
        let gains = PidGains::default();
        let mut pid = PidController::new(params, gains.clone()).unwrap();
        let mut state = VehicleState::at_rest(Vector3::zeros());
        state.attitude = Quaternion::from_euler(0.3, -0.3, 1.0);
        pid.reset(&state);
        let sensors = SensorFrame {
            specific_force: Vector3::zeros(),
            body_rate: Vector3::new(5.0, -5.0, 5.0),
            angular_accel_raw: Vector3::zeros(),
            specific_thrust: Vector3::zeros(),
            torque: Vector3::zeros(),
        };
        for _ in 0..20_000 {
            pid.step(&Vector3::new(10.0, -10.0, 10.0), &YawSource::Heading(-2.0), &state, &sensors, 0.002);
        }
        let largest_limit = [
            gains.velocity_xy,
            gains.velocity_z,
            gains.attitude_rp,
            gains.attitude_yaw,
            gains.rate_rp,
            gains.rate_yaw,
        ]
        .iter()
        .map(|a| a.integral_limit)
        .fold(0.0, f64::max);
        assert!(pid.max_integral() <= largest_limit);
    }
}
