//! Closed-loop episode rollout with a policy.

use nalgebra::Vector3;

use crate::control::{ControlOutput, LowLevelController, VelocityController, YawSource};
use crate::env::{Env, EnvError};
use crate::log::LogRecord;
use crate::metrics::{compute_tracking_errors, TrialRecord};
use crate::policy::{PolicyError, PolicySource};
use crate::rigid_body::{step_dynamics, RigidBodyError, SensorFrame, SensorModel, SensorNoise, VehicleParams, VehicleState};
use crate::seeding::{stream_rng, Stream};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Trial outcome and its full trajectory log.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub trial: TrialRecord,
    pub log: Vec<LogRecord>,
}

/// Runs one episode from `reset(seed)` until it terminates.
pub fn run_episode(env: &mut Env, policy: &PolicySource, seed: u64) -> Result<Rollout, RunError> {
    env.enable_logging();
    let mut obs = env.reset(seed)?;
    loop {
        let action = policy.act(&obs)?;
        let step = env.step(&action)?;
        obs = step.observation;
        if step.done {
            break;
        }
    }
    let log = env.take_log();
    let summary = env
        .summary()
        .expect("a terminated episode always has a summary");
    Ok(Rollout {
        trial: TrialRecord {
            summary,
            tracking: compute_tracking_errors(&log).ok(),
        },
        log,
    })
}

/// A controller flying the plant with no course or wind field, for
/// regression and tuning runs. External forces are supplied per tick.
#[derive(Debug, Clone)]
pub struct Bench {
    params: VehicleParams,
    controller: LowLevelController,
    sensor_model: SensorModel,
    state: VehicleState,
    sensors: SensorFrame,
    dt: f64,
}

impl Bench {
    pub fn new(
        params: VehicleParams,
        mut controller: LowLevelController,
        noise: SensorNoise,
        seed: u64,
        start: VehicleState,
        dt: f64,
    ) -> Self {
        controller.reset(&start);
        let mut sensor_model = SensorModel::new(noise, seed);
        sensor_model.reset(stream_rng(seed, Stream::Sensor), start.body_rate);
        let sensors = SensorFrame::at_rest(&start, &params);
        Self {
            params,
            controller,
            sensor_model,
            state: start,
            sensors,
            dt,
        }
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One physics tick with `force` (world frame, N) acting on the body.
    pub fn tick(
        &mut self,
        v_des: &Vector3<f64>,
        yaw: &YawSource,
        force: &Vector3<f64>,
    ) -> Result<ControlOutput, RigidBodyError> {
        let out = self.controller.step(v_des, yaw, &self.state, &self.sensors, self.dt);
        let next = step_dynamics(&self.params, &self.state, &out.rotors, force, self.dt)?;
        self.sensors = self
            .sensor_model
            .synthesize(&self.params, &self.state, &next, &out.rotors, self.dt);
        self.state = next;
        Ok(out)
    }
}
