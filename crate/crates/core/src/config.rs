//! Scenario files: course layout, wind, controller gains, rewards and rates.
//!
//! Files are TOML. Every section except `name` and `[course]` is optional
//! and falls back to the built-in defaults. The shipped scenarios are
//! embedded in the binary and listed by [`builtin_names`].

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::{ControllerGains, ControllerKind, PidGains};
use crate::gates::{GateSpec, LayoutBounds, TubeRanges, Workspace};
use crate::rigid_body::{SensorNoise, VehicleParams};
use crate::wind::{DragParams, FanPlacement, JetGeometry, JetSource, WindRanges};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("invalid scenario '{name}': {reason}")]
    Invalid { name: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConstants {
    /// Saturation constant of the proximity term, m.
    pub c_p: f64,
    /// Weight of the alignment term.
    pub c_a: f64,
    /// Penalty applied on frame contact.
    pub collision: f64,
}

impl Default for RewardConstants {
    fn default() -> Self {
        Self {
            c_p: 0.1,
            c_a: 0.5,
            collision: -10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub physics_hz: f64,
    pub policy_hz: f64,
    /// Episode length limit, s.
    pub timeout: f64,
    /// Largest per-axis commanded speed, m/s.
    pub v_cap: f64,
    /// Whether frame contact ends the episode.
    pub terminal_on_hit: bool,
    /// Slack around the workspace before out-of-bounds, m.
    pub bounds_margin: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            physics_hz: 500.0,
            policy_hz: 100.0,
            timeout: 30.0,
            v_cap: 2.0,
            terminal_on_hit: true,
            bounds_margin: 1.0,
        }
    }
}

impl EpisodeConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.physics_hz
    }

    /// Physics ticks per policy step.
    pub fn ticks_per_action(&self) -> usize {
        (self.physics_hz / self.policy_hz).round() as usize
    }

    pub fn policy_period(&self) -> f64 {
        self.ticks_per_action() as f64 * self.dt()
    }

    pub fn max_steps(&self) -> usize {
        (self.timeout / self.policy_period()).ceil() as usize
    }
}

/// Gate course: either a scripted list or one randomized gate per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CourseLayout {
    Fixed {
        start: Vector3<f64>,
        /// Initial heading, rad. Defaults to facing the first gate.
        #[serde(default)]
        start_yaw: Option<f64>,
        gates: Vec<GateSpec>,
    },
    Random {
        #[serde(default)]
        bounds: LayoutBounds,
        /// Size and frame of the generated gate; its pose is ignored.
        #[serde(default = "default_gate_template")]
        gate: GateSpec,
    },
}

fn default_gate_template() -> GateSpec {
    GateSpec::new(Vector3::zeros(), Vector3::x())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CourseConfig {
    /// Flight volume; leaving it by more than the episode margin ends the
    /// episode.
    pub workspace: Workspace,
    pub layout: CourseLayout,
}

/// Where fans come from when an episode has wind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "placement", rename_all = "snake_case", deny_unknown_fields)]
pub enum FanLayout {
    #[default]
    None,
    /// Fans on a randomized tube around the approach to the first gate.
    Tube {
        n_fans: usize,
        #[serde(default)]
        tube: TubeRanges,
    },
    /// Scripted positions and tracks.
    Fixed { fans: Vec<FanPlacement> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct WindConfig {
    pub ranges: WindRanges,
    pub geometry: JetGeometry,
    pub drag: DragParams,
    pub layout: FanLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Controller used when none is requested explicitly.
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    /// Speed used by the scripted straight-to-gate policy, m/s.
    #[serde(default = "default_scripted_speed")]
    pub scripted_speed: f64,
    #[serde(default)]
    pub episode: EpisodeConfig,
    #[serde(default)]
    pub reward: RewardConstants,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub indi: ControllerGains,
    #[serde(default)]
    pub pid: PidGains,
    #[serde(default)]
    pub sensor_noise: SensorNoise,
    pub course: CourseConfig,
    #[serde(default)]
    pub wind: WindConfig,
}

fn default_controller() -> ControllerKind {
    ControllerKind::Indi
}

fn default_scripted_speed() -> f64 {
    1.0
}

const BUILTIN: &[(&str, &str)] = &[
    ("training", include_str!("../scenarios/training.toml")),
    ("s1", include_str!("../scenarios/s1.toml")),
    ("s2", include_str!("../scenarios/s2.toml")),
    ("s3", include_str!("../scenarios/s3.toml")),
    ("s4", include_str!("../scenarios/s4.toml")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn builtin(name: &str) -> Result<Self, ConfigError> {
        let (_, text) = BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ConfigError::UnknownScenario(name.to_string()))?;
        Self::from_toml(text)
    }

    /// A built-in name, or else a path to a TOML file.
    pub fn resolve(name_or_path: &str) -> Result<Self, ConfigError> {
        if builtin_names().any(|n| n == name_or_path) {
            return Self::builtin(name_or_path);
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::from_path(path);
        }
        Err(ConfigError::UnknownScenario(name_or_path.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable as TOML")
    }

    /// Number of gates per trial.
    pub fn gate_count(&self) -> usize {
        match &self.course.layout {
            CourseLayout::Fixed { gates, .. } => gates.len(),
            CourseLayout::Random { .. } => 1,
        }
    }

    fn invalid(&self, reason: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.episode;
        if !(e.physics_hz > 0.0 && e.policy_hz > 0.0 && e.policy_hz <= e.physics_hz) {
            return Err(self.invalid("rates must satisfy 0 < policy_hz <= physics_hz"));
        }
        let ratio = e.physics_hz / e.policy_hz;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(self.invalid("physics_hz must be a multiple of policy_hz"));
        }
        if !(e.dt() <= 0.01) {
            return Err(self.invalid("physics_hz must be at least 100"));
        }
        if !(e.timeout > 0.0 && e.v_cap > 0.0 && e.bounds_margin >= 0.0) {
            return Err(self.invalid("timeout and v_cap must be positive, bounds_margin non-negative"));
        }
        if !(self.scripted_speed > 0.0 && self.scripted_speed <= e.v_cap) {
            return Err(self.invalid("scripted_speed must lie in (0, v_cap]"));
        }
        if !(self.reward.c_p > 0.0 && self.reward.c_a >= 0.0 && self.reward.collision <= 0.0) {
            return Err(self.invalid("reward needs c_p > 0, c_a >= 0, collision <= 0"));
        }
        self.vehicle
            .validate()
            .map_err(|err| self.invalid(err.to_string()))?;
        self.indi.validate().map_err(|err| self.invalid(err.to_string()))?;
        self.pid.validate().map_err(|err| self.invalid(err))?;
        if !(self.sensor_noise.accel_sigma >= 0.0 && self.sensor_noise.gyro_sigma >= 0.0) {
            return Err(self.invalid("sensor noise must be non-negative"));
        }
        let ws = &self.course.workspace;
        if !(0..3).all(|i| ws.min[i].is_finite() && ws.max[i].is_finite() && ws.min[i] < ws.max[i]) {
            return Err(self.invalid("workspace min must be below max"));
        }
        let r_d = self.vehicle.radius;
        match &self.course.layout {
            CourseLayout::Fixed {
                start, gates, ..
            } => {
                if gates.is_empty() {
                    return Err(self.invalid("course has no gates"));
                }
                if !ws.contains(start) {
                    return Err(self.invalid("start lies outside the workspace"));
                }
                for (i, g) in gates.iter().enumerate() {
                    g.validate(r_d)
                        .map_err(|reason| self.invalid(format!("gate {i}: {reason}")))?;
                }
            }
            CourseLayout::Random { bounds, gate } => {
                bounds.validate().map_err(|err| self.invalid(err.to_string()))?;
                gate.validate(r_d)
                    .map_err(|reason| self.invalid(format!("gate template: {reason}")))?;
            }
        }
        self.wind
            .ranges
            .validate()
            .map_err(|err| self.invalid(err.to_string()))?;
        match &self.wind.layout {
            FanLayout::None => {}
            FanLayout::Tube { n_fans, tube } => {
                if *n_fans == 0 {
                    return Err(self.invalid("tube layout needs at least one fan"));
                }
                let ok = |r: crate::wind::Range| r.0 > 0.0 && r.1 >= r.0;
                if !(ok(tube.radius) && ok(tube.length)) {
                    return Err(self.invalid("tube ranges must be positive and ordered"));
                }
            }
            FanLayout::Fixed { fans } => {
                for (i, f) in fans.iter().enumerate() {
                    let mid = self.wind.ranges;
                    JetSource::new(f.origin, f.axis, mid.u0.0, mid.f_max.0)
                        .and_then(|s| s.with_motion(f.motion.clone()))
                        .map_err(|err| self.invalid(format!("fan {i}: {err}")))?;
                }
            }
        }
        Ok(())
    }
}
