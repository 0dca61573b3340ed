use nalgebra::{Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::quaternion::Quaternion;
use super::RigidBodyError;

/// Standard gravity magnitude, m/s².
pub const GRAVITY: f64 = 9.81;

/// World-frame gravity vector, z up.
pub fn gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY)
}

/// Physical constants of the airframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Diagonal of the inertia tensor, kg·m².
    pub inertia: [f64; 3],
    /// Motor arm length, m.
    pub arm_length: f64,
    /// Lever arm of each rotor about the roll and pitch axes, m.
    pub arm_factor: f64,
    /// Yaw moment produced per newton of rotor thrust.
    pub torque_per_thrust: f64,
    /// Per-rotor thrust ceiling, N.
    pub rotor_thrust_max: f64,
    /// Radius of the collision sphere, m.
    pub radius: f64,
    /// Fraction of the rotor range kept free for attitude torques when
    /// the collective command is capped.
    pub attitude_reserve: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let arm_length = 0.046;
        Self {
            mass: 0.05,
            inertia: [1.66e-5, 1.66e-5, 2.93e-5],
            arm_length,
            arm_factor: arm_length / std::f64::consts::SQRT_2,
            torque_per_thrust: 0.005964552,
            rotor_thrust_max: 0.15,
            radius: 0.06,
            attitude_reserve: 0.1,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), RigidBodyError> {
        let bad = |what: &str| Err(RigidBodyError::InvalidParams(what.to_string()));
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if self.inertia.iter().any(|j| !(*j > 0.0)) {
            return bad("inertia diagonal must be positive");
        }
        if (self.arm_factor - self.arm_length / std::f64::consts::SQRT_2).abs() > 1e-4 {
            return bad("arm_factor must equal arm_length / sqrt(2)");
        }
        if !(self.rotor_thrust_max > self.mass * GRAVITY / 4.0) {
            return bad("rotors cannot lift the vehicle");
        }
        if !(self.radius > 0.0) {
            return bad("radius must be positive");
        }
        if !(0.0..0.5).contains(&self.attitude_reserve) {
            return bad("attitude_reserve must lie in [0, 0.5)");
        }
        if !(self.collective_limit() > self.mass * GRAVITY) {
            return bad("capped collective thrust cannot lift the vehicle");
        }
        Ok(())
    }

    pub fn inertia_vec(&self) -> Vector3<f64> {
        Vector3::from(self.inertia)
    }

    /// Largest collective thrust a controller may command, N.
    pub fn collective_limit(&self) -> f64 {
        4.0 * self.rotor_thrust_max * (1.0 - self.attitude_reserve)
    }

    pub fn hover_rotor_thrust(&self) -> f64 {
        self.mass * GRAVITY / 4.0
    }

    /// Maps rotor thrusts to `[f_c, tau_x, tau_y, tau_z]`.
    ///
    /// Rotor 1 sits front-left, 2 back-left, 3 back-right, 4 front-right;
    /// rotors 1 and 3 spin so that their drag torque acts along -z.
    pub fn mixer_matrix(&self) -> Matrix4<f64> {
        let b = self.arm_factor;
        let c = self.torque_per_thrust;
        Matrix4::new(
            1.0, 1.0, 1.0, 1.0, //
            b, b, -b, -b, //
            -b, b, b, -b, //
            -c, c, -c, c,
        )
    }
}

/// Full rigid-body state. Position and velocity are world frame, body rate
/// is body frame, and the attitude rotates body vectors into the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Quaternion,
    pub body_rate: Vector3<f64>,
    pub time: f64,
}

impl VehicleState {
    /// Level and at rest.
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: Quaternion::IDENTITY,
            body_rate: Vector3::zeros(),
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.body_rate.iter().all(|v| v.is_finite())
            && self.attitude.is_finite()
            && self.time.is_finite()
    }
}

/// Collective thrust (N) and body torque (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub thrust: f64,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.thrust, self.torque.x, self.torque.y, self.torque.z)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            thrust: v[0],
            torque: Vector3::new(v[1], v[2], v[3]),
        }
    }
}

/// Per-rotor thrust, N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorThrusts(pub [f64; 4]);

impl RotorThrusts {
    pub fn uniform(f: f64) -> Self {
        Self([f; 4])
    }

    pub fn hover(params: &VehicleParams) -> Self {
        Self::uniform(params.hover_rotor_thrust())
    }

    pub fn clamped(self, params: &VehicleParams) -> Self {
        Self(self.0.map(|f| f.clamp(0.0, params.rotor_thrust_max)))
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::from(self.0)
    }

    /// Wrench these thrusts exert on the airframe.
    pub fn wrench(&self, params: &VehicleParams) -> Wrench {
        Wrench::from_vector(&(params.mixer_matrix() * self.as_vector()))
    }
}

#[derive(Clone, Copy)]
struct Derivative {
    dp: Vector3<f64>,
    dv: Vector3<f64>,
    dq: [f64; 4],
    dw: Vector3<f64>,
}

#[derive(Clone, Copy)]
struct RawState {
    p: Vector3<f64>,
    v: Vector3<f64>,
    q: [f64; 4],
    w: Vector3<f64>,
}

impl RawState {
    fn offset(&self, d: &Derivative, h: f64) -> RawState {
        RawState {
            p: self.p + d.dp * h,
            v: self.v + d.dv * h,
            q: [
                self.q[0] + d.dq[0] * h,
                self.q[1] + d.dq[1] * h,
                self.q[2] + d.dq[2] * h,
                self.q[3] + d.dq[3] * h,
            ],
            w: self.w + d.dw * h,
        }
    }
}

fn derivative(
    s: &RawState,
    inertia: &Vector3<f64>,
    wrench: &Wrench,
    mass: f64,
    f_ext: &Vector3<f64>,
) -> Derivative {
    let q = Quaternion {
        w: s.q[0],
        x: s.q[1],
        y: s.q[2],
        z: s.q[3],
    };
    let unit = q.normalize();
    let thrust_world = unit.rotate(&Vector3::z()) * wrench.thrust;
    let dv = (thrust_world + f_ext) / mass + gravity();

    let omega = Quaternion {
        w: 0.0,
        x: s.w.x,
        y: s.w.y,
        z: s.w.z,
    };
    let qd = Quaternion::raw_mul(&q, &omega);
    let jw = inertia.component_mul(&s.w);
    let dw = (wrench.torque - s.w.cross(&jw)).component_div(inertia);

    Derivative {
        dp: s.v,
        dv,
        dq: [0.5 * qd.w, 0.5 * qd.x, 0.5 * qd.y, 0.5 * qd.z],
        dw,
    }
}

/// Advances the Newton–Euler rigid body by one fixed RK4 step.
///
/// Rotor thrusts act along body +z; `external_force` is a world-frame force
/// held constant over the step.
pub fn step_dynamics(
    params: &VehicleParams,
    state: &VehicleState,
    rotors: &RotorThrusts,
    external_force: &Vector3<f64>,
    dt: f64,
) -> Result<VehicleState, RigidBodyError> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(RigidBodyError::InvalidTimeStep(dt));
    }
    let wrench = rotors.wrench(params);
    let inertia = params.inertia_vec();
    let q = state.attitude;
    let s0 = RawState {
        p: state.position,
        v: state.velocity,
        q: [q.w, q.x, q.y, q.z],
        w: state.body_rate,
    };
    let f = |s: &RawState| derivative(s, &inertia, &wrench, params.mass, external_force);
    let k1 = f(&s0);
    let k2 = f(&s0.offset(&k1, 0.5 * dt));
    let k3 = f(&s0.offset(&k2, 0.5 * dt));
    let k4 = f(&s0.offset(&k3, dt));

    let comb = |a: f64, b: f64, c: f64, d: f64| (a + 2.0 * b + 2.0 * c + d) * dt / 6.0;
    let p = s0.p + (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp) * dt / 6.0;
    let v = s0.v + (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv) * dt / 6.0;
    let w = s0.w + (k1.dw + 2.0 * k2.dw + 2.0 * k3.dw + k4.dw) * dt / 6.0;
    let qn: [f64; 4] =
        std::array::from_fn(|i| s0.q[i] + comb(k1.dq[i], k2.dq[i], k3.dq[i], k4.dq[i]));

    let next = VehicleState {
        position: p,
        velocity: v,
        attitude: Quaternion {
            w: qn[0],
            x: qn[1],
            y: qn[2],
            z: qn[3],
        }
        .normalize(),
        body_rate: w,
        time: state.time + dt,
    };
    if !next.is_finite() || !finite_nonzero(&qn) {
        return Err(RigidBodyError::NonFiniteState { time: next.time });
    }
    Ok(next)
}

fn finite_nonzero(q: &[f64; 4]) -> bool {
    q.iter().all(|c| c.is_finite()) && q.iter().map(|c| c * c).sum::<f64>() > 0.0
}
