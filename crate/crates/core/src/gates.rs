//! Gate geometry, crossing and frame-contact detection, multi-gate
//! bookkeeping, and episode layout randomization.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::control::yaw_reference;
use crate::rigid_body::{Quaternion, VehicleState};
use crate::wind::{FanPlacement, JetMotion, Range};

/// Distance past a gate's course station at which an unresolved gate is
/// declared missed, m.
pub const SKIP_MARGIN: f64 = 1.0;
/// Extension of the course polyline beyond the final gate, m.
const COURSE_TAIL: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CourseError {
    #[error("gate {index}: {reason}")]
    BadGate { index: usize, reason: String },
    #[error("course has no gates")]
    Empty,
    #[error("no start position found after {0} attempts")]
    PlacementFailed(usize),
    #[error("invalid workspace or distance bounds: {0}")]
    BadBounds(String),
}

/// Scripted gate motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateMotion {
    #[default]
    Static,
    /// Back-and-forth sweep at constant speed between
    /// `center ± half_range · velocity/|velocity|`.
    Linear {
        velocity: Vector3<f64>,
        half_range: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub center: Vector3<f64>,
    /// Unit normal; the pass direction.
    pub normal: Vector3<f64>,
    #[serde(default = "GateSpec::default_aperture")]
    pub width: f64,
    #[serde(default = "GateSpec::default_aperture")]
    pub height: f64,
    /// In-plane width of each frame member, m.
    #[serde(default = "GateSpec::default_frame")]
    pub thickness: f64,
    /// Extent of the frame along the normal, m.
    #[serde(default = "GateSpec::default_frame")]
    pub depth: f64,
    #[serde(default)]
    pub motion: GateMotion,
}

/// Gate frame at one instant: `u` spans the width (horizontal), `v` the
/// height, `normal` completes the right-handed set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatePose {
    pub center: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl GatePose {
    /// Coordinates of `p` along (u, v, normal).
    pub fn local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let d = p - self.center;
        Vector3::new(d.dot(&self.u), d.dot(&self.v), d.dot(&self.normal))
    }
}

impl GateSpec {
    fn default_aperture() -> f64 {
        0.60
    }

    fn default_frame() -> f64 {
        0.05
    }

    pub fn new(center: Vector3<f64>, normal: Vector3<f64>) -> Self {
        Self {
            center,
            normal: normal.normalize(),
            width: Self::default_aperture(),
            height: Self::default_aperture(),
            thickness: Self::default_frame(),
            depth: Self::default_frame(),
            motion: GateMotion::Static,
        }
    }

    pub fn validate(&self, drone_radius: f64) -> Result<(), String> {
        let n = self.normal.norm();
        if !(n.is_finite() && (n - 1.0).abs() < 1e-6) {
            return Err(format!("normal must be a unit vector, got norm {n}"));
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err("center must be finite".into());
        }
        if !(self.width > 2.0 * drone_radius && self.height > 2.0 * drone_radius) {
            return Err(format!(
                "aperture {}x{} must exceed the drone diameter {}",
                self.width,
                self.height,
                2.0 * drone_radius
            ));
        }
        if !(self.thickness >= 0.0 && self.depth >= 0.0) {
            return Err("frame thickness and depth must be non-negative".into());
        }
        if let GateMotion::Linear {
            velocity,
            half_range,
        } = self.motion
        {
            if !(velocity.iter().all(|c| c.is_finite()) && half_range.is_finite() && half_range >= 0.0) {
                return Err("linear motion needs finite velocity and non-negative half_range".into());
            }
        }
        Ok(())
    }

    pub fn center_at(&self, t: f64) -> Vector3<f64> {
        match self.motion {
            GateMotion::Static => self.center,
            GateMotion::Linear {
                velocity,
                half_range,
            } => {
                let speed = velocity.norm();
                if speed == 0.0 || half_range == 0.0 {
                    return self.center;
                }
                // triangle wave starting at the center, moving along +velocity
                let period = 4.0 * half_range / speed;
                let phase = (t / period).rem_euclid(1.0) * 4.0;
                let s = if phase < 1.0 {
                    phase
                } else if phase < 3.0 {
                    2.0 - phase
                } else {
                    phase - 4.0
                };
                self.center + velocity / speed * (s * half_range)
            }
        }
    }

    pub fn pose_at(&self, t: f64) -> GatePose {
        let n = self.normal;
        let horizontal = Vector3::z().cross(&n);
        let u = if horizontal.norm() > 1e-9 {
            horizontal.normalize()
        } else {
            Vector3::x()
        };
        GatePose {
            center: self.center_at(t),
            normal: n,
            u,
            v: n.cross(&u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    None,
    Pass,
    MissCross,
}

/// Segment–plane test against the gate plane, with the gate pose linearly
/// interpolated between `t0` and `t1`. Only crossings along the normal count.
pub fn detect_crossing(
    p0: &Vector3<f64>,
    p1: &Vector3<f64>,
    gate: &GateSpec,
    t0: f64,
    t1: f64,
    drone_radius: f64,
) -> Crossing {
    let (g0, g1) = (gate.pose_at(t0), gate.pose_at(t1));
    let r0 = p0 - g0.center;
    let r1 = p1 - g1.center;
    let n = gate.normal;
    let (s0, s1) = (r0.dot(&n), r1.dot(&n));
    if !(s0 < 0.0 && s1 >= 0.0) {
        return Crossing::None;
    }
    let lambda = s0 / (s0 - s1);
    let hit = r0.lerp(&r1, lambda);
    let a = hit.dot(&g0.u).abs();
    let b = hit.dot(&g0.v).abs();
    if a <= 0.5 * gate.width - drone_radius && b <= 0.5 * gate.height - drone_radius {
        Crossing::Pass
    } else {
        Crossing::MissCross
    }
}

fn box_distance(p: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> f64 {
    let d = Vector3::from_fn(|i, _| (lo[i] - p[i]).max(p[i] - hi[i]).max(0.0));
    d.norm()
}

/// Distance from `p` to the frame solid (four members around the aperture).
pub fn frame_distance(p: &Vector3<f64>, gate: &GateSpec, t: f64) -> f64 {
    let q = gate.pose_at(t).local(p);
    let (hw, hh) = (0.5 * gate.width, 0.5 * gate.height);
    let (th, hd) = (gate.thickness, 0.5 * gate.depth);
    let members = [
        // top, bottom, left, right
        ([-hw - th, hh, -hd], [hw + th, hh + th, hd]),
        ([-hw - th, -hh - th, -hd], [hw + th, -hh, hd]),
        ([-hw - th, -hh, -hd], [-hw, hh, hd]),
        ([hw, -hh, -hd], [hw + th, hh, hd]),
    ];
    members
        .iter()
        .map(|(lo, hi)| box_distance(&q, &Vector3::from(*lo), &Vector3::from(*hi)))
        .fold(f64::INFINITY, f64::min)
}

pub fn detect_frame_hit(p: &Vector3<f64>, gate: &GateSpec, t: f64, drone_radius: f64) -> bool {
    frame_distance(p, gate, t) <= drone_radius
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateOutcome {
    Pending,
    Passed,
    Missed,
    HitPassed,
    HitMissed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum GateEvent {
    Passed { gate: usize },
    /// Crossed the gate plane outside the aperture.
    MissCrossed { gate: usize },
    /// Flew past the gate's station without crossing its plane.
    Skipped { gate: usize },
    /// First frame contact with this gate in the trial.
    Hit { gate: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct GateProgress {
    passed: Option<bool>,
    hit: bool,
}

impl GateProgress {
    fn outcome(&self) -> GateOutcome {
        match (self.passed, self.hit) {
            (None, _) => GateOutcome::Pending,
            (Some(true), false) => GateOutcome::Passed,
            (Some(true), true) => GateOutcome::HitPassed,
            (Some(false), false) => GateOutcome::Missed,
            (Some(false), true) => GateOutcome::HitMissed,
        }
    }
}

/// Sequential gate progression for one trial.
#[derive(Debug, Clone)]
pub struct CourseState {
    gates: Vec<GateSpec>,
    progress: Vec<GateProgress>,
    active: usize,
    /// Course polyline: start, gate centers, tail point.
    path: Vec<Vector3<f64>>,
    /// Arc length of each path vertex.
    arc: Vec<f64>,
}

impl CourseState {
    pub fn new(gates: Vec<GateSpec>, start: &Vector3<f64>) -> Result<Self, CourseError> {
        let last = gates.last().ok_or(CourseError::Empty)?;
        let mut path = Vec::with_capacity(gates.len() + 2);
        path.push(*start);
        path.extend(gates.iter().map(|g| g.center));
        path.push(last.center + last.normal * COURSE_TAIL);
        let mut arc = vec![0.0];
        for w in path.windows(2) {
            arc.push(arc[arc.len() - 1] + (w[1] - w[0]).norm());
        }
        Ok(Self {
            progress: vec![GateProgress::default(); gates.len()],
            gates,
            active: 0,
            path,
            arc,
        })
    }

    pub fn gates(&self) -> &[GateSpec] {
        &self.gates
    }

    /// Index of the gate currently targeted; equals the gate count once
    /// every gate is resolved.
    pub fn active_index(&self) -> usize {
        self.active
    }

    pub fn active_gate(&self) -> Option<&GateSpec> {
        self.gates.get(self.active)
    }

    /// Gate shown to the policy: the active one, or the last after finishing.
    pub fn target_gate(&self) -> &GateSpec {
        &self.gates[self.active.min(self.gates.len() - 1)]
    }

    pub fn is_finished(&self) -> bool {
        self.active >= self.gates.len()
    }

    pub fn outcomes(&self) -> Vec<GateOutcome> {
        self.progress.iter().map(GateProgress::outcome).collect()
    }

    pub fn missed(&self) -> usize {
        self.progress.iter().filter(|g| g.passed == Some(false)).count()
    }

    pub fn passed(&self) -> usize {
        self.progress.iter().filter(|g| g.passed == Some(true)).count()
    }

    pub fn hits(&self) -> usize {
        self.progress.iter().filter(|g| g.hit).count()
    }

    /// Arc-length coordinate of the path point closest to `p`.
    pub fn progress_along(&self, p: &Vector3<f64>) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for (k, w) in self.path.windows(2).enumerate() {
            let seg = w[1] - w[0];
            let len2 = seg.norm_squared();
            let s = if len2 > 0.0 {
                ((p - w[0]).dot(&seg) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = (w[0] + seg * s - p).norm();
            if d < best.0 {
                best = (d, self.arc[k] + s * len2.sqrt());
            }
        }
        best.1
    }

    /// Course station of gate `i`.
    pub fn station(&self, i: usize) -> f64 {
        self.arc[i + 1]
    }

    /// Records one event. Returns false when the event does not apply
    /// (wrong gate, already resolved, or hit already counted).
    pub fn apply(&mut self, event: GateEvent) -> bool {
        match event {
            GateEvent::Hit { gate } => match self.progress.get_mut(gate) {
                Some(g) if !g.hit => {
                    g.hit = true;
                    true
                }
                _ => false,
            },
            GateEvent::Passed { gate }
            | GateEvent::MissCrossed { gate }
            | GateEvent::Skipped { gate } => {
                if gate != self.active || self.is_finished() {
                    return false;
                }
                self.progress[gate].passed = Some(matches!(event, GateEvent::Passed { .. }));
                self.active += 1;
                true
            }
        }
    }

    /// Detects and records the events for the segment `p0 → p1` flown over
    /// `[t0, t1]`.
    pub fn update(
        &mut self,
        p0: &Vector3<f64>,
        p1: &Vector3<f64>,
        t0: f64,
        t1: f64,
        drone_radius: f64,
    ) -> Vec<GateEvent> {
        let mut events = Vec::new();
        for (i, gate) in self.gates.iter().enumerate() {
            if !self.progress[i].hit && detect_frame_hit(p1, gate, t1, drone_radius) {
                events.push(GateEvent::Hit { gate: i });
            }
        }
        if let Some(gate) = self.active_gate() {
            match detect_crossing(p0, p1, gate, t0, t1, drone_radius) {
                Crossing::Pass => events.push(GateEvent::Passed { gate: self.active }),
                Crossing::MissCross => events.push(GateEvent::MissCrossed { gate: self.active }),
                Crossing::None => {}
            }
        }
        events.retain(|e| self.apply(*e));
        let s = self.progress_along(p1);
        while !self.is_finished() && s > self.station(self.active) + SKIP_MARGIN {
            let e = GateEvent::Skipped { gate: self.active };
            self.apply(e);
            events.push(e);
        }
        events
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Workspace {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn inflated(&self, margin: f64) -> Workspace {
        Workspace {
            min: self.min.add_scalar(-margin),
            max: self.max.add_scalar(margin),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector3<f64> {
        Vector3::from_fn(|i, _| Range(self.min[i], self.max[i]).sample(rng))
    }

    fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i])
    }
}

/// Bounds for per-episode gate and start placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutBounds {
    /// Region for the gate center.
    pub gate: Workspace,
    /// Region for the drone start.
    pub start: Workspace,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for LayoutBounds {
    fn default() -> Self {
        Self {
            gate: Workspace {
                min: Vector3::new(-2.0, -2.0, 1.0),
                max: Vector3::new(2.0, 2.0, 2.0),
            },
            start: Workspace {
                min: Vector3::new(-6.0, -6.0, 0.5),
                max: Vector3::new(6.0, 6.0, 3.0),
            },
            d_min: 1.0,
            d_max: 5.0,
        }
    }
}

impl LayoutBounds {
    pub fn validate(&self) -> Result<(), CourseError> {
        if !(self.gate.is_valid() && self.start.is_valid()) {
            return Err(CourseError::BadBounds("workspace min must not exceed max".into()));
        }
        if !(self.d_min > 0.0 && self.d_max >= self.d_min && self.d_max.is_finite()) {
            return Err(CourseError::BadBounds(format!(
                "need 0 < d_min <= d_max, got {} and {}",
                self.d_min, self.d_max
            )));
        }
        Ok(())
    }
}

pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Uniform point in the spherical shell `d_min <= |p - center| <= d_max`.
pub fn sample_shell<R: Rng + ?Sized>(
    rng: &mut R,
    center: &Vector3<f64>,
    d_min: f64,
    d_max: f64,
) -> Vector3<f64> {
    let dir = loop {
        let d: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(&mut *rng));
        if d.norm() > 1e-9 {
            break d.normalize();
        }
    };
    let r3 = Range(d_min.powi(3), d_max.powi(3)).sample(rng);
    center + dir * r3.cbrt()
}

/// Random gate pose (horizontal normal, uniform heading) and a level start
/// at rest in the distance shell around it, behind the gate and facing it.
pub fn randomize_gate_and_start<R: Rng + ?Sized>(
    rng: &mut R,
    bounds: &LayoutBounds,
    template: &GateSpec,
) -> Result<(GateSpec, VehicleState), CourseError> {
    bounds.validate()?;
    let center = bounds.gate.sample(rng);
    let heading = Range(-std::f64::consts::PI, std::f64::consts::PI).sample(rng);
    let mut normal = Vector3::new(heading.cos(), heading.sin(), 0.0);
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let start = sample_shell(rng, &center, bounds.d_min, bounds.d_max);
        if !bounds.start.contains(&start) {
            continue;
        }
        if normal.dot(&(center - start)) < 0.0 {
            normal = -normal;
        }
        let gate = GateSpec {
            center,
            normal,
            motion: GateMotion::Static,
            ..*template
        };
        let mut state = VehicleState::at_rest(start);
        if let Ok(yaw) = yaw_reference(&normal, &center, &start) {
            state.attitude = Quaternion::from_yaw(yaw);
        }
        return Ok((gate, state));
    }
    Err(CourseError::PlacementFailed(MAX_PLACEMENT_ATTEMPTS))
}

/// Tube of fan sources around the approach to a gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TubeRanges {
    pub radius: Range,
    pub length: Range,
}

impl Default for TubeRanges {
    fn default() -> Self {
        Self {
            radius: Range(0.25, 1.00),
            length: Range(0.2, 1.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TubeLayout {
    pub radius: f64,
    pub length: f64,
    /// Axial position of each fan, measured from the gate center against
    /// the normal.
    pub stations: Vec<f64>,
    pub fans: Vec<FanPlacement>,
}

/// Fans on the lateral surface of a tube whose axis runs from the gate
/// center back along `-normal`, each blowing at the nearest axis point.
pub fn place_fan_tube_sources<R: Rng + ?Sized>(
    rng: &mut R,
    gate: &GateSpec,
    n_fans: usize,
    ranges: &TubeRanges,
) -> TubeLayout {
    let radius = ranges.radius.sample(rng);
    let length = ranges.length.sample(rng);
    let pose = gate.pose_at(0.0);
    let mut stations = Vec::with_capacity(n_fans);
    let fans = (0..n_fans)
        .map(|_| {
            let s = Range(0.0, length).sample(rng);
            let phi = Range(0.0, std::f64::consts::TAU).sample(rng);
            let on_axis = pose.center - pose.normal * s;
            let radial = pose.u * phi.cos() + pose.v * phi.sin();
            stations.push(s);
            FanPlacement {
                origin: on_axis + radial * radius,
                axis: -radial,
                motion: JetMotion::Static,
            }
        })
        .collect();
    TubeLayout {
        radius,
        length,
        stations,
        fans,
    }
}
