//! Localized fan-jet wind: mean jet profile, per-fan OU turbulence with
//! intermittent gusts, and the quadratic drag coupling to the airframe.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WindError {
    #[error("jet axis must be a finite non-zero vector")]
    BadAxis,
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("waypoint times must be finite and strictly increasing")]
    BadWaypoints,
}

fn check_range(name: &'static str, value: f64, (lo, hi): (f64, f64)) -> Result<(), WindError> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(WindError::OutOfRange {
            name,
            value,
            lo,
            hi,
        })
    }
}

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.1 > self.0 {
            rng.random_range(self.0..=self.1)
        } else {
            self.0
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.0 && x <= self.1
    }

    fn bounds(&self) -> (f64, f64) {
        (self.0, self.1)
    }
}

pub const U0_RANGE: Range = Range(1.0, 10.0);
pub const F_MAX_RANGE: Range = Range(0.05, 1.0);
pub const SIGMA_TURB_RANGE: Range = Range(0.001, 0.20);
pub const TAU_TURB_RANGE: Range = Range(0.08, 0.40);

/// Shape constants shared by every jet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JetGeometry {
    /// Virtual origin offset, m.
    pub x0: f64,
    /// Jet width at the nozzle, m.
    pub sigma0: f64,
    pub k_spread: f64,
    /// Cutoff radius in units of the local width.
    pub kappa: f64,
}

impl Default for JetGeometry {
    fn default() -> Self {
        Self {
            x0: 0.20,
            sigma0: 0.10,
            k_spread: 0.18,
            kappa: 3.0,
        }
    }
}

impl JetGeometry {
    pub fn width(&self, x: f64) -> f64 {
        self.sigma0 + self.k_spread * x
    }

    pub fn centerline_speed(&self, u0: f64, x: f64) -> f64 {
        u0 * self.x0 / (self.x0 + x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetWaypoint {
    pub t: f64,
    pub origin: Vector3<f64>,
    pub axis: Vector3<f64>,
}

/// How a fan moves during an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JetMotion {
    #[default]
    Static,
    /// Piecewise-linear track, held at the end points.
    Waypoints { points: Vec<JetWaypoint> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JetSource {
    pub origin: Vector3<f64>,
    /// Unit blowing direction.
    pub axis: Vector3<f64>,
    /// Nozzle speed, m/s.
    pub u0: f64,
    /// Bound on the drag force this fan can impose, N.
    pub f_max: f64,
    pub geometry: JetGeometry,
    pub motion: JetMotion,
}

fn unit(v: &Vector3<f64>) -> Result<Vector3<f64>, WindError> {
    let n = v.norm();
    if n.is_finite() && n > 1e-12 {
        Ok(v / n)
    } else {
        Err(WindError::BadAxis)
    }
}

impl JetSource {
    pub fn new(
        origin: Vector3<f64>,
        axis: Vector3<f64>,
        u0: f64,
        f_max: f64,
    ) -> Result<Self, WindError> {
        check_range("u0", u0, U0_RANGE.bounds())?;
        check_range("f_max", f_max, F_MAX_RANGE.bounds())?;
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(WindError::BadAxis);
        }
        Ok(Self {
            origin,
            axis: unit(&axis)?,
            u0,
            f_max,
            geometry: JetGeometry::default(),
            motion: JetMotion::Static,
        })
    }

    pub fn with_motion(mut self, motion: JetMotion) -> Result<Self, WindError> {
        if let JetMotion::Waypoints { points } = &motion {
            if points.is_empty()
                || !points.iter().all(|w| w.t.is_finite())
                || points.windows(2).any(|w| w[1].t <= w[0].t)
            {
                return Err(WindError::BadWaypoints);
            }
            for w in points {
                unit(&w.axis)?;
            }
        }
        self.motion = motion;
        Ok(self)
    }

    /// Origin and unit axis at time `t`.
    pub fn pose_at(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let JetMotion::Waypoints { points } = &self.motion else {
            return (self.origin, self.axis);
        };
        let first = &points[0];
        let last = &points[points.len() - 1];
        if t <= first.t {
            return (first.origin, first.axis.normalize());
        }
        if t >= last.t {
            return (last.origin, last.axis.normalize());
        }
        let k = points.partition_point(|w| w.t <= t);
        let (a, b) = (&points[k - 1], &points[k]);
        let s = (t - a.t) / (b.t - a.t);
        let axis = a.axis.normalize().lerp(&b.axis.normalize(), s);
        let axis = if axis.norm() > 1e-9 {
            axis.normalize()
        } else {
            a.axis.normalize()
        };
        (a.origin.lerp(&b.origin, s), axis)
    }
}

/// Downstream and radial coordinates of `p` in the jet frame.
fn jet_coordinates(origin: &Vector3<f64>, axis: &Vector3<f64>, p: &Vector3<f64>) -> (f64, f64) {
    let d = p - origin;
    let x = d.dot(axis);
    (x, (d - axis * x).norm())
}

fn in_region(geometry: &JetGeometry, x: f64, r: f64) -> bool {
    x > 0.0 && r <= geometry.kappa * geometry.width(x)
}

/// Mean jet velocity at `p` for a jet with the given pose.
pub fn mean_velocity_at(
    origin: &Vector3<f64>,
    axis: &Vector3<f64>,
    u0: f64,
    geometry: &JetGeometry,
    p: &Vector3<f64>,
) -> Vector3<f64> {
    let (x, r) = jet_coordinates(origin, axis, p);
    if !in_region(geometry, x, r) {
        return Vector3::zeros();
    }
    let sigma = geometry.width(x);
    let u = geometry.centerline_speed(u0, x) * (-(r * r) / (2.0 * sigma * sigma)).exp();
    axis * u
}

/// Mean velocity of a jet in its initial pose.
pub fn jet_mean_velocity(src: &JetSource, p: &Vector3<f64>) -> Vector3<f64> {
    mean_velocity_at(&src.origin, &src.axis, src.u0, &src.geometry, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GustParams {
    /// Activation rate while idle, 1/s.
    pub rate: f64,
    /// Gust speed, m/s.
    pub magnitude: Range,
    /// Hold duration, s.
    pub hold: Range,
}

impl Default for GustParams {
    fn default() -> Self {
        Self {
            rate: 0.1,
            magnitude: Range(0.5, 2.0),
            hold: Range(0.2, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Gust {
    velocity: Vector3<f64>,
    remaining: f64,
}

/// Time-correlated turbulence plus held gusts for one fan.
#[derive(Debug, Clone)]
pub struct TurbulenceState {
    v_turb: Vector3<f64>,
    sigma: f64,
    tau: f64,
    gust_params: GustParams,
    gust: Option<Gust>,
    rng: ChaCha8Rng,
}

impl TurbulenceState {
    /// The OU state starts from its stationary distribution.
    pub fn new(sigma: f64, tau: f64, gust_params: GustParams, rng: ChaCha8Rng) -> Result<Self, WindError> {
        check_range("sigma_turb", sigma, (0.0, f64::MAX))?;
        check_range("tau_turb", tau, (1e-6, f64::MAX))?;
        check_range("gust rate", gust_params.rate, (0.0, f64::MAX))?;
        let mut state = Self {
            v_turb: Vector3::zeros(),
            sigma,
            tau,
            gust_params,
            gust: None,
            rng,
        };
        state.v_turb = state.normal3() * sigma;
        Ok(state)
    }

    pub fn from_seed(sigma: f64, tau: f64, gust_params: GustParams, seed: u64) -> Result<Self, WindError> {
        Self::new(sigma, tau, gust_params, ChaCha8Rng::seed_from_u64(seed))
    }

    /// Overrides the OU state, e.g. to observe a noiseless decay.
    pub fn set_velocity(&mut self, v: Vector3<f64>) {
        self.v_turb = v;
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.v_turb
    }

    pub fn gust_velocity(&self) -> Vector3<f64> {
        self.gust.map_or(Vector3::zeros(), |g| g.velocity)
    }

    fn normal3(&mut self) -> Vector3<f64> {
        let rng = &mut self.rng;
        Vector3::from_fn(|_, _| StandardNormal.sample(rng))
    }

    /// Exact discretization of the OU process over `dt`.
    pub fn ou_step(&mut self, dt: f64) -> Vector3<f64> {
        let decay = (-dt / self.tau).exp();
        let scale = self.sigma * (1.0 - decay * decay).sqrt();
        let n = self.normal3();
        self.v_turb = self.v_turb * decay + n * scale;
        self.v_turb
    }

    /// Gust held over the interval ending now.
    pub fn gust_step(&mut self, dt: f64) -> Vector3<f64> {
        // One uniform is drawn every tick so stream use is state-independent.
        let u: f64 = self.rng.random();
        match &mut self.gust {
            Some(g) => {
                let v = g.velocity;
                g.remaining -= dt;
                if g.remaining <= 0.0 {
                    self.gust = None;
                }
                v
            }
            None => {
                let p = 1.0 - (-self.gust_params.rate * dt).exp();
                if u >= p {
                    return Vector3::zeros();
                }
                let dir = loop {
                    let d = self.normal3();
                    if d.norm() > 1e-9 {
                        break d.normalize();
                    }
                };
                let speed = self.gust_params.magnitude.sample(&mut self.rng);
                let hold = self.gust_params.hold.sample(&mut self.rng);
                let velocity = dir * speed;
                self.gust = Some(Gust {
                    velocity,
                    remaining: hold - dt,
                })
                .filter(|g| g.remaining > 0.0);
                velocity
            }
        }
    }

    /// Turbulence plus gust contribution for the next `dt`.
    pub fn step(&mut self, dt: f64) -> Vector3<f64> {
        self.ou_step(dt) + self.gust_step(dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DragParams {
    /// Air density, kg/m³.
    pub rho: f64,
    /// Drag area, m².
    pub cd_a: f64,
    /// Wind speed safety clamp, m/s.
    pub v_max: f64,
}

impl Default for DragParams {
    fn default() -> Self {
        Self {
            rho: 1.225,
            cd_a: 0.012,
            v_max: 12.0,
        }
    }
}

/// Quadratic drag along `v_rel`, magnitude capped at `f_max`.
pub fn drag_force(v_rel: &Vector3<f64>, params: &DragParams, f_max: f64) -> Vector3<f64> {
    let speed = v_rel.norm();
    let mag = 0.5 * params.rho * params.cd_a * speed * speed;
    if mag <= f_max {
        v_rel * (0.5 * params.rho * params.cd_a * speed)
    } else {
        v_rel * (f_max / speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WindSample {
    pub v_wind: Vector3<f64>,
    pub force: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct Fan {
    pub source: JetSource,
    pub turbulence: TurbulenceState,
}

/// Every fan active in one episode.
#[derive(Debug, Clone, Default)]
pub struct WindField {
    fans: Vec<Fan>,
    drag: DragParams,
}

impl WindField {
    pub fn new(fans: Vec<Fan>, drag: DragParams) -> Self {
        Self { fans, drag }
    }

    pub fn calm() -> Self {
        Self::default()
    }

    pub fn fans(&self) -> &[Fan] {
        &self.fans
    }

    pub fn is_enabled(&self) -> bool {
        !self.fans.is_empty()
    }

    /// Current turbulence and gust velocity of every fan.
    pub fn turbulence_snapshot(&self) -> Vec<[f64; 6]> {
        self.fans
            .iter()
            .map(|f| {
                let (v, g) = (f.turbulence.velocity(), f.turbulence.gust_velocity());
                [v.x, v.y, v.z, g.x, g.y, g.z]
            })
            .collect()
    }

    /// Wind and drag force on a body at `p` moving at `v_body`, advancing
    /// each fan's turbulence by `dt`.
    ///
    /// Every fan's turbulence advances on every call regardless of where
    /// the body is, so the random streams never depend on the trajectory.
    pub fn sample(&mut self, p: &Vector3<f64>, v_body: &Vector3<f64>, t: f64, dt: f64) -> WindSample {
        if self.fans.is_empty() {
            return WindSample::default();
        }
        let mut v_wind = Vector3::zeros();
        let mut f_max: f64 = 0.0;
        for fan in &mut self.fans {
            let fluct = fan.turbulence.step(dt);
            let src = &fan.source;
            let (origin, axis) = src.pose_at(t);
            let (x, r) = jet_coordinates(&origin, &axis, p);
            if in_region(&src.geometry, x, r) {
                v_wind += mean_velocity_at(&origin, &axis, src.u0, &src.geometry, p) + fluct;
            }
            f_max = f_max.max(src.f_max);
        }
        let speed = v_wind.norm();
        if speed > self.drag.v_max {
            v_wind *= self.drag.v_max / speed;
        }
        let force = drag_force(&(v_wind - v_body), &self.drag, f_max);
        WindSample { v_wind, force }
    }
}

/// Per-episode sampling ranges for the fan parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindRanges {
    /// Probability that an episode has wind at all.
    pub p_wind: f64,
    pub u0: Range,
    pub f_max: Range,
    pub sigma_turb: Range,
    pub tau_turb: Range,
    pub gust: GustParams,
}

impl Default for WindRanges {
    fn default() -> Self {
        Self {
            p_wind: 0.5,
            u0: U0_RANGE,
            f_max: F_MAX_RANGE,
            sigma_turb: SIGMA_TURB_RANGE,
            tau_turb: TAU_TURB_RANGE,
            gust: GustParams::default(),
        }
    }
}

impl WindRanges {
    pub fn validate(&self) -> Result<(), WindError> {
        check_range("p_wind", self.p_wind, (0.0, 1.0))?;
        let nested = [
            ("u0", self.u0, U0_RANGE),
            ("f_max", self.f_max, F_MAX_RANGE),
            ("sigma_turb", self.sigma_turb, SIGMA_TURB_RANGE),
            ("tau_turb", self.tau_turb, TAU_TURB_RANGE),
        ];
        for (name, r, outer) in nested {
            check_range(name, r.0, outer.bounds())?;
            check_range(name, r.1, (r.0, outer.1))?;
        }
        check_range("gust rate", self.gust.rate, (0.0, f64::MAX))?;
        Ok(())
    }
}

/// Where a fan sits and how it moves; strength is drawn per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanPlacement {
    pub origin: Vector3<f64>,
    pub axis: Vector3<f64>,
    #[serde(default)]
    pub motion: JetMotion,
}

/// Draws the episode's fan set: empty with probability `1 - p_wind`,
/// otherwise one fan per placement with parameters uniform in `ranges`.
///
/// `placements` is only called when wind is enabled. Fan `k`'s turbulence
/// draws from `fan_rng(k)`.
pub fn randomize_episode<R, F, S>(
    rng: &mut R,
    ranges: &WindRanges,
    geometry: &JetGeometry,
    placements: F,
    fan_rng: S,
) -> Result<Vec<Fan>, WindError>
where
    R: Rng + ?Sized,
    F: FnOnce(&mut R) -> Vec<FanPlacement>,
    S: Fn(usize) -> ChaCha8Rng,
{
    if !rng.random_bool(ranges.p_wind) {
        return Ok(Vec::new());
    }
    placements(rng)
        .into_iter()
        .enumerate()
        .map(|(k, place)| {
            let u0 = ranges.u0.sample(rng);
            let f_max = ranges.f_max.sample(rng);
            let sigma = ranges.sigma_turb.sample(rng);
            let tau = ranges.tau_turb.sample(rng);
            let mut source = JetSource::new(place.origin, place.axis, u0, f_max)?
                .with_motion(place.motion)?;
            source.geometry = *geometry;
            let turbulence = TurbulenceState::new(sigma, tau, ranges.gust, fan_rng(k))?;
            Ok(Fan { source, turbulence })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet(u0: f64) -> JetSource {
        JetSource::new(Vector3::zeros(), Vector3::x(), u0, 0.5).unwrap()
    }

    #[test]
    fn half_speed_at_virtual_origin_distance() {
        let v = jet_mean_velocity(&jet(8.0), &Vector3::new(0.2, 0.0, 0.0));
        assert_eq!(v, Vector3::new(4.0, 0.0, 0.0));
    }

    #[test]
    fn one_width_off_axis() {
        let g = JetGeometry::default();
        let sigma = g.width(0.2);
        assert!((sigma - 0.136).abs() < 1e-15);
        let v = jet_mean_velocity(&jet(10.0), &Vector3::new(0.2, sigma, 0.0));
        assert!((v.norm() - 5.0 * (-0.5f64).exp()).abs() < 1e-12);
        assert!((v.norm() - 3.033).abs() < 1e-3);
    }

    #[test]
    fn zero_upstream_and_beyond_cutoff() {
        let j = jet(10.0);
        assert_eq!(jet_mean_velocity(&j, &Vector3::new(-0.1, 0.0, 0.0)), Vector3::zeros());
        assert_eq!(jet_mean_velocity(&j, &Vector3::new(0.0, 0.0, 0.0)), Vector3::zeros());
        let x = 1.0;
        let cut = 3.0 * JetGeometry::default().width(x);
        assert!(jet_mean_velocity(&j, &Vector3::new(x, cut * 0.999, 0.0)).norm() > 0.0);
        assert_eq!(jet_mean_velocity(&j, &Vector3::new(x, cut * 1.001, 0.0)), Vector3::zeros());
    }

    #[test]
    fn drag_values() {
        let d = DragParams::default();
        assert_eq!(drag_force(&Vector3::zeros(), &d, 1.0), Vector3::zeros());
        let f = drag_force(&Vector3::new(0.0, 1.0, 0.0), &d, 1.0);
        assert!((f.norm() - 0.00735).abs() < 1e-15);
        let f = drag_force(&Vector3::new(0.0, 0.0, -10.0), &d, 0.5);
        assert!((f - Vector3::new(0.0, 0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn noiseless_ou_decays_exponentially() {
        let mut t = TurbulenceState::from_seed(0.0, 0.2, GustParams::default(), 3).unwrap();
        t.set_velocity(Vector3::new(1.0, -2.0, 0.5));
        for _ in 0..100 {
            t.ou_step(0.002);
        }
        let expect = (-0.2f64 / 0.2).exp();
        assert!((t.velocity() - Vector3::new(1.0, -2.0, 0.5) * expect).norm() < 1e-12);
    }

    #[test]
    fn gusts_hold_then_release() {
        let gust = GustParams {
            rate: 1e6,
            magnitude: Range(1.0, 1.0),
            hold: Range(0.1, 0.1),
        };
        let mut t = TurbulenceState::from_seed(0.0, 0.2, gust, 9).unwrap();
        let first = t.gust_step(0.01);
        assert!((first.norm() - 1.0).abs() < 1e-12);
        for _ in 0..9 {
            assert_eq!(t.gust_step(0.01), first);
        }
        let idle = GustParams {
            rate: 0.0,
            ..gust
        };
        let mut t = TurbulenceState::from_seed(0.0, 0.2, idle, 9).unwrap();
        assert!((0..10_000).all(|_| t.gust_step(0.002) == Vector3::zeros()));
    }

    #[test]
    fn calm_field_exerts_nothing() {
        let mut w = WindField::calm();
        let s = w.sample(&Vector3::zeros(), &Vector3::new(2.0, 0.0, 0.0), 0.0, 0.002);
        assert_eq!(s, WindSample::default());
    }

    #[test]
    fn waypoint_interpolation() {
        let wp = |t: f64, x: f64| JetWaypoint {
            t,
            origin: Vector3::new(x, 0.0, 0.0),
            axis: Vector3::y(),
        };
        let j = jet(5.0)
            .with_motion(JetMotion::Waypoints {
                points: vec![wp(0.0, 0.0), wp(2.0, 4.0)],
            })
            .unwrap();
        assert_eq!(j.pose_at(1.0).0, Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(j.pose_at(-1.0).0, Vector3::zeros());
        assert_eq!(j.pose_at(5.0).0, Vector3::new(4.0, 0.0, 0.0));
        assert!(jet(5.0)
            .with_motion(JetMotion::Waypoints {
                points: vec![wp(1.0, 0.0), wp(1.0, 1.0)],
            })
            .is_err());
    }

    #[test]
    fn out_of_range_parameters_rejected() {
        assert!(JetSource::new(Vector3::zeros(), Vector3::x(), 11.0, 0.5).is_err());
        assert!(JetSource::new(Vector3::zeros(), Vector3::zeros(), 5.0, 0.5).is_err());
        assert!(JetSource::new(Vector3::zeros(), Vector3::x(), 5.0, 0.01).is_err());
    }
}
