//! Low-level velocity trackers and the shared force–torque mixer.

pub mod allocation;
pub mod attitude;
pub mod indi;
pub mod pid;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::rigid_body::{RotorThrusts, SensorFrame, VehicleState, Wrench};

pub use allocation::{allocate, mixer_inverse, AllocationError};
pub use attitude::{
    attitude_command, resolve_normal, tilt_quaternion, yaw_quaternion, yaw_reference,
    AttitudeCommand, DegenerateNormal,
};
pub use indi::{inner_loop, outer_loop, ControllerGains, IndiController, IndiError, OuterLoopOutput};
pub use pid::{PidController, PidGains};

/// Where the heading reference comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YawSource {
    /// Keep the previous heading reference.
    Hold,
    /// Fixed heading, rad.
    Heading(f64),
    /// Align with the horizontal projection of a gate normal.
    Gate {
        normal: Vector3<f64>,
        center: Vector3<f64>,
    },
}

/// Recoverable conditions hit during one controller tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlFlags {
    pub degenerate_thrust: bool,
    pub degenerate_normal: bool,
    pub fallback_hover: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub rotors: RotorThrusts,
    /// Wrench requested before allocation.
    pub wrench: Wrench,
    pub flags: ControlFlags,
}

/// A controller that tracks an inertial velocity reference.
pub trait VelocityController {
    fn reset(&mut self, initial: &VehicleState);

    fn step(
        &mut self,
        v_des: &Vector3<f64>,
        yaw: &YawSource,
        state: &VehicleState,
        sensors: &SensorFrame,
        dt: f64,
    ) -> ControlOutput;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Indi,
    Pid,
}

impl ControllerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Indi => "indi",
            ControllerKind::Pid => "pid",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "indi" => Ok(Self::Indi),
            "pid" => Ok(Self::Pid),
            other => Err(format!("unknown controller '{other}' (expected indi or pid)")),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Either tracker behind one interface.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)] // one per environment, never moved in a loop
pub enum LowLevelController {
    Indi(IndiController),
    Pid(PidController),
}

impl LowLevelController {
    pub fn kind(&self) -> ControllerKind {
        match self {
            LowLevelController::Indi(_) => ControllerKind::Indi,
            LowLevelController::Pid(_) => ControllerKind::Pid,
        }
    }
}

impl VelocityController for LowLevelController {
    fn reset(&mut self, initial: &VehicleState) {
        match self {
            LowLevelController::Indi(c) => c.reset(initial),
            LowLevelController::Pid(c) => c.reset(initial),
        }
    }

    fn step(
        &mut self,
        v_des: &Vector3<f64>,
        yaw: &YawSource,
        state: &VehicleState,
        sensors: &SensorFrame,
        dt: f64,
    ) -> ControlOutput {
        match self {
            LowLevelController::Indi(c) => c.step(v_des, yaw, state, sensors, dt),
            LowLevelController::Pid(c) => c.step(v_des, yaw, state, sensors, dt),
        }
    }
}
