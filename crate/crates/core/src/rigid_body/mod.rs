//! Quaternion math, quadrotor rigid-body dynamics and sensor synthesis.

mod quaternion;
mod sensors;
mod vehicle;

pub use quaternion::{wrap_half_open, Quaternion};
pub use sensors::{SensorFrame, SensorModel, SensorNoise};
pub use vehicle::{
    gravity, step_dynamics, RotorThrusts, VehicleParams, VehicleState, Wrench, GRAVITY,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RigidBodyError {
    #[error("state became non-finite at t = {time} s")]
    NonFiniteState { time: f64 },
    #[error("time step {0} s outside (0, 0.01]")]
    InvalidTimeStep(f64),
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
}
