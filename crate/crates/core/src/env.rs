//! Stepped gate-traversal environment: plant, sensors, low-level tracker,
//! wind and course behind a reset/step interface driven at the policy rate.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, CourseLayout, FanLayout, ScenarioConfig};
use crate::control::{
    resolve_normal, yaw_reference, ControlFlags, ControllerKind, IndiController, LowLevelController,
    PidController, VelocityController, YawSource,
};
use crate::gates::{
    place_fan_tube_sources, randomize_gate_and_start, CourseError, CourseState, GateEvent, GateSpec,
};
use crate::log::{EpisodeSummary, LogRecord, StartRecord, StepRecord};
use crate::rigid_body::{
    step_dynamics, Quaternion, SensorFrame, SensorModel,
    VehicleState,
};
use crate::seeding::{stream_rng, Stream};
use crate::wind::{randomize_episode, WindError, WindField, WindSample};

pub const OBS_DIM: usize = 20;
pub const ACT_DIM: usize = 4;

/// Speed below which the alignment reward is zero, m/s.
const MIN_ALIGN_SPEED: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("step called before reset")]
    StepBeforeReset,
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("controller setup failed: {0}")]
    Controller(String),
    #[error(transparent)]
    Course(#[from] CourseError),
    #[error(transparent)]
    Wind(#[from] WindError),
}

/// Position, roll/pitch/yaw, velocity, body rate, gate offset, aperture
/// size and gate normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn build(state: &VehicleState, gate: &GateSpec, t: f64) -> Self {
        let pose = gate.pose_at(t);
        let (roll, pitch, yaw) = state.attitude.to_euler();
        let rel = pose.center - state.position;
        let p = state.position;
        let v = state.velocity;
        let w = state.body_rate;
        let n = pose.normal;
        Self([
            p.x, p.y, p.z, roll, pitch, yaw, v.x, v.y, v.z, w.x, w.y, w.z, rel.x, rel.y, rel.z,
            gate.width, gate.height, n.x, n.y, n.z,
        ])
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn gate_offset(&self) -> Vector3<f64> {
        Vector3::new(self.0[12], self.0[13], self.0[14])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Raw policy output: direction components and a magnitude scale, each
/// meaningful in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action(pub [f64; ACT_DIM]);

impl Action {
    pub const HOVER: Action = Action([0.0, 0.0, 0.0, -1.0]);

    /// Clamped to the unit box; NaN components become 0.
    pub fn clamped(&self) -> Action {
        Action(self.0.map(|a| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) }))
    }
}

/// Velocity reference for an action: the scale maps affinely onto
/// `[0, v_cap]` and multiplies the direction components.
pub fn map_action(action: &Action, v_cap: f64) -> Vector3<f64> {
    let [x, y, z, scale] = action.clamped().0;
    let v_max = v_cap * (scale + 1.0) / 2.0;
    Vector3::new(x, y, z) * v_max
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub proximity: f64,
    pub collision: f64,
    pub alignment: f64,
    pub total: f64,
}

pub fn compute_reward(
    position: &Vector3<f64>,
    velocity: &Vector3<f64>,
    gate_center: &Vector3<f64>,
    gate_normal: &Vector3<f64>,
    collided: bool,
    constants: &crate::config::RewardConstants,
) -> RewardTerms {
    let d_goal = (gate_center - position).norm();
    let proximity = 1.0 / (d_goal + constants.c_p);
    let collision = if collided { constants.collision } else { 0.0 };
    let speed = velocity.norm();
    let alignment = if speed < MIN_ALIGN_SPEED {
        0.0
    } else {
        let n = resolve_normal(gate_normal, gate_center, position);
        constants.c_a * (velocity / speed).dot(&n)
    };
    RewardTerms {
        proximity,
        collision,
        alignment,
        total: proximity + collision + alignment,
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Every gate resolved; the trial reached the end of the course.
    Completed,
    Collision,
    OutOfBounds,
    Timeout,
    NonFinite,
}

/// Side information of one policy step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub t: f64,
    pub v_des: Vector3<f64>,
    /// Wind truth on the last physics tick.
    pub wind: WindSample,
    pub reward_terms: RewardTerms,
    pub events: Vec<GateEvent>,
    /// Union of the controller flags raised during the step.
    pub flags: ControlFlags,
    /// `|v - v_des|` at the end of the step, m/s.
    pub velocity_error: f64,
    pub active_gate: usize,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
struct Episode {
    seed: u64,
    state: VehicleState,
    sensors: SensorFrame,
    course: CourseState,
    wind: WindField,
    steps: usize,
    termination: Option<Termination>,
    last_wind: WindSample,
}

/// One environment instance. Owns all of its state, including random
/// streams, so separate instances can run on separate threads.
#[derive(Debug, Clone)]
pub struct Env {
    config: ScenarioConfig,
    controller: LowLevelController,
    sensor_model: SensorModel,
    episode: Option<Episode>,
    log: Option<Vec<LogRecord>>,
}

impl Env {
    pub fn new(config: ScenarioConfig, controller: ControllerKind) -> Result<Self, EnvError> {
        config.validate()?;
        let controller = match controller {
            ControllerKind::Indi => LowLevelController::Indi(
                IndiController::new(config.vehicle.clone(), config.indi.clone(), config.episode.physics_hz)
                    .map_err(|e| EnvError::Controller(e.to_string()))?,
            ),
            ControllerKind::Pid => LowLevelController::Pid(
                PidController::new(config.vehicle.clone(), config.pid.clone()).map_err(EnvError::Controller)?,
            ),
        };
        let sensor_model = SensorModel::new(config.sensor_noise, 0);
        Ok(Self {
            config,
            controller,
            sensor_model,
            episode: None,
            log: None,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn controller_kind(&self) -> ControllerKind {
        self.controller.kind()
    }

    /// Starts keeping trajectory records; they are cleared on every reset.
    pub fn enable_logging(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn log(&self) -> &[LogRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn take_log(&mut self) -> Vec<LogRecord> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn state(&self) -> Option<&VehicleState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn course(&self) -> Option<&CourseState> {
        self.episode.as_ref().map(|e| &e.course)
    }

    pub fn wind(&self) -> Option<&WindField> {
        self.episode.as_ref().map(|e| &e.wind)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.termination.is_some())
    }

    pub fn observation(&self) -> Option<Observation> {
        self.episode
            .as_ref()
            .map(|e| Observation::build(&e.state, e.course.target_gate(), e.state.time))
    }

    /// Draws the layout and wind for `seed` and returns the first
    /// observation.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        let cfg = &self.config;
        let mut layout_rng = stream_rng(seed, Stream::Layout);
        let (gates, start) = match &cfg.course.layout {
            CourseLayout::Fixed {
                start,
                start_yaw,
                gates,
            } => {
                let mut state = VehicleState::at_rest(*start);
                let first = &gates[0];
                let yaw = start_yaw.or_else(|| yaw_reference(&first.normal, &first.center, start).ok());
                if let Some(yaw) = yaw {
                    state.attitude = Quaternion::from_yaw(yaw);
                }
                (gates.clone(), state)
            }
            CourseLayout::Random { bounds, gate } => {
                let (g, s) = randomize_gate_and_start(&mut layout_rng, bounds, gate)?;
                (vec![g], s)
            }
        };

        let mut wind_rng = stream_rng(seed, Stream::Wind);
        let first_gate = gates[0];
        let layout = &cfg.wind.layout;
        let fans = match layout {
            FanLayout::None => Vec::new(),
            _ => randomize_episode(
                &mut wind_rng,
                &cfg.wind.ranges,
                &cfg.wind.geometry,
                |rng| match layout {
                    FanLayout::Tube { n_fans, tube } => {
                        place_fan_tube_sources(rng, &first_gate, *n_fans, tube).fans
                    }
                    FanLayout::Fixed { fans } => fans.clone(),
                    FanLayout::None => Vec::new(),
                },
                |k| stream_rng(seed, Stream::Fan(k)),
            )?,
        };
        let wind = WindField::new(fans, cfg.wind.drag);

        self.controller.reset(&start);
        self.sensor_model
            .reset(stream_rng(seed, Stream::Sensor), start.body_rate);
        let sensors = SensorFrame::at_rest(&start, &self.config.vehicle);
        let course = CourseState::new(gates, &start.position)?;

        if let Some(log) = self.log.as_mut() {
            log.clear();
            log.push(LogRecord::Start(StartRecord {
                t: start.time,
                p: start.position,
                v: start.velocity,
                q: start.attitude,
                omega: start.body_rate,
            }));
        }
        let obs = Observation::build(&start, course.target_gate(), start.time);
        self.episode = Some(Episode {
            seed,
            state: start,
            sensors,
            course,
            wind,
            steps: 0,
            termination: None,
            last_wind: WindSample::default(),
        });
        Ok(obs)
    }

    /// Holds the action's velocity reference for one policy period.
    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        let cfg = &self.config;
        let ep = self.episode.as_mut().ok_or(EnvError::StepBeforeReset)?;
        if ep.termination.is_some() {
            return Err(EnvError::EpisodeFinished);
        }
        let dt = cfg.episode.dt();
        let params = &cfg.vehicle;
        let v_des = map_action(action, cfg.episode.v_cap);
        let bounds = cfg.course.workspace.inflated(cfg.episode.bounds_margin);
        let mut events = Vec::new();
        let mut flags = ControlFlags::default();
        let mut collided = false;
        let mut termination = None;

        for _ in 0..cfg.episode.ticks_per_action() {
            let t0 = ep.state.time;
            let gate = ep.course.target_gate().pose_at(t0);
            let yaw = YawSource::Gate {
                normal: gate.normal,
                center: gate.center,
            };
            ep.last_wind = ep.wind.sample(&ep.state.position, &ep.state.velocity, t0, dt);
            let out = self.controller.step(&v_des, &yaw, &ep.state, &ep.sensors, dt);
            flags.degenerate_thrust |= out.flags.degenerate_thrust;
            flags.degenerate_normal |= out.flags.degenerate_normal;
            flags.fallback_hover |= out.flags.fallback_hover;

            let next = match step_dynamics(params, &ep.state, &out.rotors, &ep.last_wind.force, dt) {
                Ok(s) => s,
                Err(_) => {
                    termination = Some(Termination::NonFinite);
                    break;
                }
            };
            ep.sensors = self
                .sensor_model
                .synthesize(params, &ep.state, &next, &out.rotors, dt);
            let tick_events = ep.course.update(
                &ep.state.position,
                &next.position,
                t0,
                next.time,
                params.radius,
            );
            ep.state = next;
            collided |= tick_events.iter().any(|e| matches!(e, GateEvent::Hit { .. }));
            events.extend(tick_events);

            if collided && cfg.episode.terminal_on_hit {
                termination = Some(Termination::Collision);
            } else if ep.course.is_finished() {
                termination = Some(Termination::Completed);
            } else if !bounds.contains(&ep.state.position) || ep.state.position.z < 0.0 {
                termination = Some(Termination::OutOfBounds);
            }
            if termination.is_some() {
                break;
            }
        }
        ep.steps += 1;
        if termination.is_none() && ep.state.time >= cfg.episode.timeout - 0.5 * dt {
            termination = Some(Termination::Timeout);
        }
        ep.termination = termination;

        let t = ep.state.time;
        let target = ep.course.target_gate().pose_at(t);
        let reward_terms = compute_reward(
            &ep.state.position,
            &ep.state.velocity,
            &target.center,
            &target.normal,
            collided,
            &cfg.reward,
        );
        // on divergence ep.state is still the last finite state
        let observation = Observation::build(&ep.state, ep.course.target_gate(), t);
        let info = StepInfo {
            t,
            v_des,
            wind: ep.last_wind,
            reward_terms,
            events,
            flags,
            velocity_error: (ep.state.velocity - v_des).norm(),
            active_gate: ep.course.active_index(),
            termination,
        };

        if let Some(log) = self.log.as_mut() {
            let s = &ep.state;
            log.push(LogRecord::Step(StepRecord {
                t,
                p: s.position,
                v: s.velocity,
                q: s.attitude,
                omega: s.body_rate,
                v_des,
                v_wind: ep.last_wind.v_wind,
                f_w: ep.last_wind.force,
                reward: reward_terms,
                events: info.events.clone(),
                flags,
            }));
            if let Some(term) = termination {
                log.push(LogRecord::Episode(summarize(&self.config, self.controller.kind(), ep, term)));
            }
        }

        Ok(StepResult {
            observation,
            reward: reward_terms.total,
            done: termination.is_some(),
            info,
        })
    }

    /// Summary of the finished episode, if any.
    pub fn summary(&self) -> Option<EpisodeSummary> {
        let ep = self.episode.as_ref()?;
        let term = ep.termination?;
        Some(summarize(&self.config, self.controller.kind(), ep, term))
    }
}

fn summarize(cfg: &ScenarioConfig, controller: ControllerKind, ep: &Episode, term: Termination) -> EpisodeSummary {
    EpisodeSummary {
        scenario: cfg.name.clone(),
        controller,
        seed: ep.seed,
        n_gates: ep.course.gates().len(),
        passed: ep.course.passed(),
        missed: ep.course.missed(),
        hits: ep.course.hits(),
        completed: term == Termination::Completed,
        termination: term,
        steps: ep.steps,
        duration: ep.state.time,
        wind_enabled: ep.wind.is_enabled(),
        outcomes: ep.course.outcomes(),
    }
}

