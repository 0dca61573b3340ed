use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::vehicle::{gravity, RotorThrusts, VehicleParams, VehicleState};

/// Raw signals available to the low-level controllers after each physics tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    /// Accelerometer reading, body frame, m/s².
    pub specific_force: Vector3<f64>,
    /// Gyroscope reading, body frame, rad/s.
    pub body_rate: Vector3<f64>,
    /// Backward difference of consecutive gyroscope readings, rad/s².
    pub angular_accel_raw: Vector3<f64>,
    /// Specific thrust actually applied, world frame, m/s².
    pub specific_thrust: Vector3<f64>,
    /// Torque actually applied, body frame, N·m.
    pub torque: Vector3<f64>,
}

impl SensorFrame {
    /// Noise-free readings for a vehicle at rest with the rotors at hover
    /// thrust, used before the first physics tick.
    pub fn at_rest(state: &VehicleState, params: &VehicleParams) -> Self {
        let hover = RotorThrusts::hover(params).wrench(params);
        Self {
            specific_force: state.attitude.rotate_inverse(&-gravity()),
            body_rate: state.body_rate,
            angular_accel_raw: Vector3::zeros(),
            specific_thrust: state.attitude.rotate(&Vector3::z()) * (hover.thrust / params.mass),
            torque: hover.torque,
        }
    }
}

/// Standard deviations of additive Gaussian noise. Zero disables a channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorNoise {
    pub accel_sigma: f64,
    pub gyro_sigma: f64,
}

/// Stateful sensor synthesizer. Keeps the previous gyro reading for the
/// angular-acceleration difference and owns its own noise stream.
#[derive(Debug, Clone)]
pub struct SensorModel {
    noise: SensorNoise,
    rng: ChaCha8Rng,
    prev_rate: Vector3<f64>,
}

impl SensorModel {
    pub fn new(noise: SensorNoise, seed: u64) -> Self {
        Self {
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            prev_rate: Vector3::zeros(),
        }
    }

    /// Replaces the noise stream and primes the gyro memory.
    pub fn reset(&mut self, rng: ChaCha8Rng, initial_rate: Vector3<f64>) {
        self.rng = rng;
        self.prev_rate = initial_rate;
    }

    fn gaussian(&mut self, sigma: f64) -> Vector3<f64> {
        if sigma == 0.0 {
            return Vector3::zeros();
        }
        let mut n = || -> f64 { StandardNormal.sample(&mut self.rng) };
        Vector3::new(n(), n(), n()) * sigma
    }

    /// Builds the sensor frame for the tick that took `before` to `after`
    /// with `rotors` applied.
    pub fn synthesize(
        &mut self,
        params: &VehicleParams,
        before: &VehicleState,
        after: &VehicleState,
        rotors: &RotorThrusts,
        dt: f64,
    ) -> SensorFrame {
        // average acceleration over the RK4 step
        let accel = (after.velocity - before.velocity) / dt;
        let specific_force = after.attitude.rotate_inverse(&(accel - gravity()))
            + self.gaussian(self.noise.accel_sigma);
        let body_rate = after.body_rate + self.gaussian(self.noise.gyro_sigma);
        let angular_accel_raw = (body_rate - self.prev_rate) / dt;
        self.prev_rate = body_rate;

        let wrench = rotors.wrench(params);
        let specific_thrust = after.attitude.rotate(&Vector3::z()) * (wrench.thrust / params.mass);

        SensorFrame {
            specific_force,
            body_rate,
            angular_accel_raw,
            specific_thrust,
            torque: wrench.torque,
        }
    }
}
