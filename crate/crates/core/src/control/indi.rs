//! Geometric INDI velocity tracker: incremental specific-thrust outer loop,
//! geometric attitude construction, incremental torque inner loop.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::allocation::allocate;
use super::attitude::{tilt_quaternion, yaw_quaternion, yaw_reference, AttitudeCommand};
use super::{ControlFlags, ControlOutput, VelocityController, YawSource};
use crate::rigid_body::{Quaternion, RotorThrusts, SensorFrame, VehicleParams, VehicleState, Wrench};
use crate::signal_chain::{FilterBank, FilterCutoffs, FilterError, FilteredSignals};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndiError {
    #[error("commanded specific thrust {0} m/s² is too small to define a direction")]
    DegenerateThrust(f64),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Tuning of the INDI cascade. Defaults are the reference flight
/// tuning for the 50 g airframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    /// Velocity proportional gain, 1/s.
    pub k_v: [f64; 3],
    /// Velocity integral gain, 1/s².
    pub k_i: [f64; 3],
    /// Attitude gain, 1/s².
    pub k_xi: [f64; 3],
    /// Rate damping gain, 1/s.
    pub k_omega: [f64; 3],
    pub alpha_outer: f64,
    pub alpha_inner: f64,
    /// Per-axis torque magnitude bound, N·m.
    pub torque_sat: f64,
    /// Per-axis bound on the velocity-error integral, m.
    pub integral_limit: f64,
    /// Commanded specific thrust below which the direction is held, m/s².
    pub min_thrust: f64,
    /// Multiplier applied to `k_xi` and `k_omega`. 1.0 uses the reference
    /// values literally; lower it when running a stiffer or heavier airframe.
    pub inner_gain_scale: f64,
    /// Largest angle between the commanded thrust and world up, rad.
    pub max_tilt: f64,
    /// Floor on the upward component of the commanded specific thrust, m/s².
    /// Together with `max_tilt` it keeps a velocity reversal from turning
    /// into a commanded flip.
    pub min_vertical_thrust: f64,
    pub cutoffs: FilterCutoffs,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_v: [3.519, 3.519, 31.481],
            k_i: [0.037, 0.037, 5.556],
            k_xi: [4.643e9, 4.643e9, 46.08e9],
            k_omega: [7.857e8, 7.857e8, 5.530e8],
            alpha_outer: 1.0,
            alpha_inner: 1.0,
            torque_sat: 9.49e-4,
            integral_limit: 1.0,
            min_thrust: 0.1,
            inner_gain_scale: 1.0,
            max_tilt: std::f64::consts::FRAC_PI_4,
            min_vertical_thrust: 2.0,
            cutoffs: FilterCutoffs::default(),
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), IndiError> {
        let bad = |m: &str| Err(IndiError::InvalidGains(m.to_string()));
        let diags = [self.k_v, self.k_i, self.k_xi, self.k_omega];
        if diags.iter().flatten().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return bad("diagonal gains must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.alpha_outer) || !(0.0..=1.0).contains(&self.alpha_inner) {
            return bad("blending factors must lie in [0, 1]");
        }
        if !(self.torque_sat > 0.0) || !(self.integral_limit >= 0.0) || !(self.min_thrust > 0.0) {
            return bad("saturation limits must be positive");
        }
        if !(self.inner_gain_scale > 0.0) {
            return bad("inner_gain_scale must be positive");
        }
        if !(self.max_tilt > 0.0 && self.max_tilt < std::f64::consts::FRAC_PI_2) {
            return bad("max_tilt must lie in (0, pi/2)");
        }
        if !(self.min_vertical_thrust > 0.0) || !self.min_vertical_thrust.is_finite() {
            return bad("min_vertical_thrust must be positive");
        }
        Ok(())
    }

    pub fn k_xi_scaled(&self) -> Vector3<f64> {
        Vector3::from(self.k_xi) * self.inner_gain_scale
    }

    pub fn k_omega_scaled(&self) -> Vector3<f64> {
        Vector3::from(self.k_omega) * self.inner_gain_scale
    }
}

/// Result of the velocity outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterLoopOutput {
    /// Commanded acceleration from velocity tracking, m/s².
    pub accel_cmd: Vector3<f64>,
    /// Commanded specific-thrust vector, world frame, m/s².
    pub specific_thrust: Vector3<f64>,
    /// Collective thrust, N, clamped to what the rotors can deliver.
    pub collective: f64,
    /// Unit thrust direction.
    pub direction: Vector3<f64>,
}

/// Incremental specific-thrust update driven by the velocity error.
///
/// `integral` is the accumulated velocity error *before* this tick.
#[allow(clippy::too_many_arguments)]
pub fn outer_loop(
    v_des: &Vector3<f64>,
    velocity: &Vector3<f64>,
    integral: &Vector3<f64>,
    filtered: &FilteredSignals,
    gains: &ControllerGains,
    mass: f64,
    max_collective: f64,
) -> Result<OuterLoopOutput, IndiError> {
    let e_v = v_des - velocity;
    let accel_cmd =
        Vector3::from(gains.k_v).component_mul(&e_v) + Vector3::from(gains.k_i).component_mul(integral);
    let raw = filtered.specific_thrust + gains.alpha_outer * (accel_cmd - filtered.accel);
    let norm = raw.norm();
    if !(norm >= gains.min_thrust) {
        return Err(IndiError::DegenerateThrust(norm));
    }
    let specific_thrust = tilt_envelope(raw, gains.max_tilt, gains.min_vertical_thrust);
    let norm = specific_thrust.norm();
    Ok(OuterLoopOutput {
        accel_cmd,
        specific_thrust,
        collective: (mass * norm).clamp(0.0, max_collective),
        direction: specific_thrust / norm,
    })
}

/// Raises the vertical component to `min_up` and shortens the horizontal
/// part so the vector stays within `max_tilt` of world up.
pub fn tilt_envelope(t: Vector3<f64>, max_tilt: f64, min_up: f64) -> Vector3<f64> {
    let z = t.z.max(min_up);
    let h = Vector3::new(t.x, t.y, 0.0);
    let h_max = z * max_tilt.tan();
    let h_norm = h.norm();
    let h = if h_norm > h_max { h * (h_max / h_norm) } else { h };
    Vector3::new(h.x, h.y, z)
}

/// Incremental torque command tracking the relative attitude `xi_c`.
pub fn inner_loop(
    xi_c: &Quaternion,
    filtered: &FilteredSignals,
    gains: &ControllerGains,
    inertia: &Vector3<f64>,
) -> Vector3<f64> {
    let xi_e = xi_c.log();
    let ang_accel_cmd =
        gains.k_xi_scaled().component_mul(&xi_e) - gains.k_omega_scaled().component_mul(&filtered.body_rate);
    let mu = filtered.torque
        + gains.alpha_inner * inertia.component_mul(&(ang_accel_cmd - filtered.angular_accel));
    mu.map(|t| t.clamp(-gains.torque_sat, gains.torque_sat))
}

#[derive(Debug, Clone)]
pub struct IndiController {
    params: VehicleParams,
    gains: ControllerGains,
    bank: FilterBank,
    integral: Vector3<f64>,
    last_thrust_cmd: Vector3<f64>,
    last_torque_cmd: Vector3<f64>,
    last_direction: Vector3<f64>,
    last_yaw_ref: f64,
    last_attitude: Option<AttitudeCommand>,
}

impl IndiController {
    pub fn new(
        params: VehicleParams,
        gains: ControllerGains,
        sample_rate: f64,
    ) -> Result<Self, IndiError> {
        gains.validate()?;
        let bank = FilterBank::new(&gains.cutoffs, sample_rate)?;
        let hover = FilteredSignals::hover();
        Ok(Self {
            params,
            gains,
            bank,
            integral: Vector3::zeros(),
            last_thrust_cmd: hover.specific_thrust,
            last_torque_cmd: Vector3::zeros(),
            last_direction: Vector3::z(),
            last_yaw_ref: 0.0,
            last_attitude: None,
        })
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    pub fn integral(&self) -> Vector3<f64> {
        self.integral
    }

    pub fn last_thrust_cmd(&self) -> Vector3<f64> {
        self.last_thrust_cmd
    }

    pub fn last_torque_cmd(&self) -> Vector3<f64> {
        self.last_torque_cmd
    }

    pub fn last_attitude(&self) -> Option<&AttitudeCommand> {
        self.last_attitude.as_ref()
    }

    fn hover_hold(&self) -> (Wrench, RotorThrusts) {
        let w = Wrench {
            thrust: self.params.mass * crate::rigid_body::GRAVITY,
            torque: Vector3::zeros(),
        };
        (w, RotorThrusts::hover(&self.params))
    }
}

impl VelocityController for IndiController {
    fn reset(&mut self, initial: &VehicleState) {
        let hover = FilteredSignals::hover();
        self.bank.reset();
        self.integral = Vector3::zeros();
        self.last_thrust_cmd = hover.specific_thrust;
        self.last_torque_cmd = Vector3::zeros();
        self.last_direction = initial.attitude.rotate(&Vector3::z());
        self.last_yaw_ref = initial.attitude.to_euler().2;
        self.last_attitude = None;
    }

    fn step(
        &mut self,
        v_des: &Vector3<f64>,
        yaw: &YawSource,
        state: &VehicleState,
        sensors: &SensorFrame,
        dt: f64,
    ) -> ControlOutput {
        let mut flags = ControlFlags::default();
        let filtered = self.bank.update(sensors, &state.attitude);
        let max_collective = self.params.collective_limit();

        let (thrust_vec, collective, direction) = match outer_loop(
            v_des,
            &state.velocity,
            &self.integral,
            &filtered,
            &self.gains,
            self.params.mass,
            max_collective,
        ) {
            Ok(o) => (o.specific_thrust, o.collective, o.direction),
            Err(_) => {
                flags.degenerate_thrust = true;
                let t = filtered.specific_thrust
                    + self.gains.alpha_outer * (-filtered.accel);
                let c = (self.params.mass * t.norm()).clamp(0.0, max_collective);
                (t, c, self.last_direction)
            }
        };
        let lim = self.gains.integral_limit;
        self.integral = (self.integral + (v_des - state.velocity) * dt).map(|e| e.clamp(-lim, lim));

        let yaw_ref = match yaw {
            YawSource::Hold => self.last_yaw_ref,
            YawSource::Heading(h) => *h,
            YawSource::Gate { normal, center } => {
                match yaw_reference(normal, center, &state.position) {
                    Ok(psi) => psi,
                    Err(_) => {
                        flags.degenerate_normal = true;
                        self.last_yaw_ref
                    }
                }
            }
        };

        let tilt = tilt_quaternion(&state.attitude, &direction);
        let (yaw_q, relative) = yaw_quaternion(&state.attitude, &tilt, yaw_ref);
        let torque = inner_loop(&relative, &filtered, &self.gains, &self.params.inertia_vec());

        let wrench = Wrench {
            thrust: collective,
            torque,
        };
        let rotors = match allocate(&wrench, &self.params) {
            Ok(r) if r.0.iter().all(|f| f.is_finite()) && wrench.torque.iter().all(|t| t.is_finite()) => r,
            _ => {
                flags.fallback_hover = true;
                let (w, r) = self.hover_hold();
                return ControlOutput {
                    rotors: r,
                    wrench: w,
                    flags,
                };
            }
        };

        self.last_thrust_cmd = thrust_vec;
        self.last_torque_cmd = torque;
        self.last_direction = direction;
        self.last_yaw_ref = yaw_ref;
        self.last_attitude = Some(AttitudeCommand {
            tilt,
            yaw: yaw_q,
            relative,
            thrust_direction: direction,
            yaw_ref,
        });

        ControlOutput {
            rotors,
            wrench,
            flags,
        }
    }
}
