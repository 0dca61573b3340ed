//! Second-order Butterworth low-pass filters and the filter bank that feeds
//! the incremental controllers.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::rigid_body::{gravity, Quaternion, SensorFrame};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("cutoff {cutoff} Hz must lie in (0, {nyquist}) for sample rate {sample_rate} Hz", nyquist = sample_rate / 2.0)]
    InvalidCutoff { cutoff: f64, sample_rate: f64 },
}

/// Biquad section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
    z1: f64,
    z2: f64,
    cutoff: f64,
    sample_rate: f64,
}

impl Biquad {
    /// Butterworth low-pass via the bilinear transform with the cutoff
    /// prewarped, so the -3 dB point lands exactly on `cutoff`.
    pub fn butterworth_lowpass(cutoff: f64, sample_rate: f64) -> Result<Self, FilterError> {
        if !(cutoff > 0.0 && cutoff < sample_rate / 2.0) {
            return Err(FilterError::InvalidCutoff {
                cutoff,
                sample_rate,
            });
        }
        let k = (PI * cutoff / sample_rate).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Ok(Self {
            b0,
            b1: 2.0 * b0,
            b2: b0,
            a1: 2.0 * (k2 - 1.0) * norm,
            a2: (1.0 - SQRT_2 * k + k2) * norm,
            z1: 0.0,
            z2: 0.0,
            cutoff,
            sample_rate,
        })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// Magnitude of the discrete transfer function at `freq` Hz.
    pub fn gain_at(&self, freq: f64) -> f64 {
        let w = 2.0 * PI * freq / self.sample_rate;
        let (s1, c1) = w.sin_cos();
        let (s2, c2) = (2.0 * w).sin_cos();
        // H(e^{jw}) with z^-1 = cos w - j sin w
        let num_re = self.b0 + self.b1 * c1 + self.b2 * c2;
        let num_im = -(self.b1 * s1 + self.b2 * s2);
        let den_re = 1.0 + self.a1 * c1 + self.a2 * c2;
        let den_im = -(self.a1 * s1 + self.a2 * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }

    /// Largest pole magnitude.
    pub fn pole_radius(&self) -> f64 {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc < 0.0 {
            self.a2.sqrt()
        } else {
            let r = disc.sqrt();
            ((-self.a1 + r) / 2.0).abs().max(((-self.a1 - r) / 2.0).abs())
        }
    }

    /// Sets the internal state so a constant input `x` passes unchanged.
    pub fn warm_start(&mut self, x: f64) {
        self.z1 = x * (1.0 - self.b0);
        self.z2 = x * (self.b2 - self.a2);
    }

    pub fn reset(&mut self) {
        self.z1 = 0.0;
        self.z2 = 0.0;
    }

    pub fn step(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.z1;
        self.z1 = self.b1 * x - self.a1 * y + self.z2;
        self.z2 = self.b2 * x - self.a2 * y;
        y
    }
}

/// Three identical biquads, one per vector component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad3 {
    axes: [Biquad; 3],
}

impl Biquad3 {
    pub fn butterworth_lowpass(cutoff: f64, sample_rate: f64) -> Result<Self, FilterError> {
        let f = Biquad::butterworth_lowpass(cutoff, sample_rate)?;
        Ok(Self { axes: [f; 3] })
    }

    pub fn warm_start(&mut self, x: &Vector3<f64>) {
        for (f, v) in self.axes.iter_mut().zip(x.iter()) {
            f.warm_start(*v);
        }
    }

    pub fn step(&mut self, x: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.axes[0].step(x.x),
            self.axes[1].step(x.y),
            self.axes[2].step(x.z),
        )
    }

    pub fn cutoff(&self) -> f64 {
        self.axes[0].cutoff()
    }
}

/// Cutoff frequencies for each filtered channel, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterCutoffs {
    pub accel: f64,
    pub gyro: f64,
    pub angular_accel: f64,
    pub thrust: f64,
    pub torque: f64,
}

impl Default for FilterCutoffs {
    fn default() -> Self {
        Self {
            accel: 6.0,
            gyro: 10.0,
            angular_accel: 6.0,
            thrust: 10.0,
            torque: 10.0,
        }
    }
}

/// Output of one filter-bank update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilteredSignals {
    /// Kinematic acceleration, world frame, m/s².
    pub accel: Vector3<f64>,
    /// Body rate, rad/s.
    pub body_rate: Vector3<f64>,
    /// Angular acceleration, rad/s².
    pub angular_accel: Vector3<f64>,
    /// Applied specific thrust, world frame, m/s².
    pub specific_thrust: Vector3<f64>,
    /// Applied torque, body frame, N·m.
    pub torque: Vector3<f64>,
}

impl FilteredSignals {
    /// Steady hover values.
    pub fn hover() -> Self {
        Self {
            accel: Vector3::zeros(),
            body_rate: Vector3::zeros(),
            angular_accel: Vector3::zeros(),
            specific_thrust: -gravity(),
            torque: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterBank {
    accel: Biquad3,
    gyro: Biquad3,
    angular_accel: Biquad3,
    thrust: Biquad3,
    torque: Biquad3,
    primed: bool,
}

impl FilterBank {
    pub fn new(cutoffs: &FilterCutoffs, sample_rate: f64) -> Result<Self, FilterError> {
        Ok(Self {
            accel: Biquad3::butterworth_lowpass(cutoffs.accel, sample_rate)?,
            gyro: Biquad3::butterworth_lowpass(cutoffs.gyro, sample_rate)?,
            angular_accel: Biquad3::butterworth_lowpass(cutoffs.angular_accel, sample_rate)?,
            thrust: Biquad3::butterworth_lowpass(cutoffs.thrust, sample_rate)?,
            torque: Biquad3::butterworth_lowpass(cutoffs.torque, sample_rate)?,
            primed: false,
        })
    }

    /// Forgets all history; the next update warm-starts every channel.
    pub fn reset(&mut self) {
        self.primed = false;
    }

    /// Filters one sensor frame. `attitude` rotates the accelerometer reading
    /// into the world frame before gravity is added back.
    pub fn update(&mut self, sensors: &SensorFrame, attitude: &Quaternion) -> FilteredSignals {
        let accel = attitude.rotate(&sensors.specific_force) + gravity();
        if !self.primed {
            self.accel.warm_start(&accel);
            self.gyro.warm_start(&sensors.body_rate);
            self.angular_accel.warm_start(&sensors.angular_accel_raw);
            self.thrust.warm_start(&sensors.specific_thrust);
            self.torque.warm_start(&sensors.torque);
            self.primed = true;
        }
        FilteredSignals {
            accel: self.accel.step(&accel),
            body_rate: self.gyro.step(&sensors.body_rate),
            angular_accel: self.angular_accel.step(&sensors.angular_accel_raw),
            specific_thrust: self.thrust.step(&sensors.specific_thrust),
            torque: self.torque.step(&sensors.torque),
        }
    }
}
