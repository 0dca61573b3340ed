//! Trial tallies, pass/hit/completion ratios, overall success rate and
//! tracking errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::ControllerKind;
use crate::log::{EpisodeSummary, LogRecord};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("tally has no scheduled gate passes")]
    ZeroGates,
    #[error("invalid tally: {0}")]
    InvalidTally(String),
    #[error("log has no step records")]
    EmptyLog,
    #[error("records for {scenario}/{controller} disagree on the gate count")]
    MixedScenario { scenario: String, controller: String },
    #[error("no episode records to aggregate")]
    NoTrials,
}

/// Counts over the trials of one scenario and controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioTally {
    /// Gates per trial.
    pub n_gates: usize,
    pub n_trials: usize,
    /// Missed gates.
    pub missed: usize,
    /// Gate hits, at most one per gate per trial.
    pub hits: usize,
    /// Completed trials.
    pub completed: usize,
}

impl ScenarioTally {
    /// Scheduled gate passes.
    pub fn scheduled(&self) -> usize {
        self.n_gates * self.n_trials
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let g = self.scheduled();
        if g == 0 {
            return Err(MetricsError::ZeroGates);
        }
        if self.missed > g || self.hits > g || self.completed > self.n_trials {
            return Err(MetricsError::InvalidTally(format!(
                "P = {}, h = {}, f = {} with {g} scheduled passes over {} trials",
                self.missed, self.hits, self.completed, self.n_trials
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    /// Gate pass ratio.
    pub pass: f64,
    /// Hit-free ratio.
    pub hit_free: f64,
    /// Completion rate.
    pub completion: f64,
}

pub fn compute_ratios(t: &ScenarioTally) -> Result<Ratios, MetricsError> {
    t.validate()?;
    let g = t.scheduled() as f64;
    Ok(Ratios {
        pass: 1.0 - t.missed as f64 / g,
        hit_free: 1.0 - t.hits as f64 / g,
        completion: t.completed as f64 / t.n_trials as f64,
    })
}

/// Mean of the three ratios, or zero when no trial completed.
pub fn compute_osr(r: &Ratios) -> f64 {
    if r.completion > 0.0 {
        (r.completion + r.pass + r.hit_free) / 3.0
    } else {
        0.0
    }
}

/// Tracking quality of one trial. Position errors are measured against the
/// time integral of the commanded velocity from the start position.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingErrors {
    pub rmse: f64,
    pub mae: f64,
    pub max_abs: f64,
    pub rmse_vel: f64,
}

/// One sample of the flown trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSample {
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Command held over the interval ending at `t`.
    pub v_des: Vector3<f64>,
}

pub fn tracking_errors(
    start: &Vector3<f64>,
    t_start: f64,
    samples: &[TrackSample],
) -> Result<TrackingErrors, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let mut reference = *start;
    let mut t_prev = t_start;
    let (mut sq, mut abs, mut max, mut sq_v) = (0.0, 0.0, 0.0f64, 0.0);
    for s in samples {
        reference += s.v_des * (s.t - t_prev);
        t_prev = s.t;
        let e = (s.p - reference).norm();
        sq += e * e;
        abs += e;
        max = max.max(e);
        sq_v += (s.v - s.v_des).norm_squared();
    }
    let n = samples.len() as f64;
    Ok(TrackingErrors {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        max_abs: max,
        rmse_vel: (sq_v / n).sqrt(),
    })
}

/// Tracking errors of the first episode in a trajectory log.
pub fn compute_tracking_errors(log: &[LogRecord]) -> Result<TrackingErrors, MetricsError> {
    let mut start = None;
    let mut samples = Vec::new();
    for rec in log {
        match rec {
            LogRecord::Start(s) => {
                if start.is_some() {
                    break;
                }
                start = Some((s.p, s.t));
            }
            LogRecord::Step(s) => samples.push(TrackSample {
                t: s.t,
                p: s.p,
                v: s.v,
                v_des: s.v_des,
            }),
            LogRecord::Episode(_) => {}
        }
    }
    let (p0, t0) = match (start, samples.first()) {
        (Some(s), _) => s,
        // without a start record the first sample anchors the reference
        (None, Some(first)) => (first.p, first.t),
        (None, None) => return Err(MetricsError::EmptyLog),
    };
    let samples = if start.is_some() { &samples[..] } else { &samples[1..] };
    tracking_errors(&p0, t0, samples)
}

/// Episode outcome plus its tracking errors, when a trajectory was kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub summary: EpisodeSummary,
    #[serde(default)]
    pub tracking: Option<TrackingErrors>,
}

/// Splits a log into one trial per episode summary. Each summary closes the
/// records since the previous one; a run cut off before its summary is
/// dropped.
pub fn trials_from_log(log: &[LogRecord]) -> Vec<TrialRecord> {
    let mut trials = Vec::new();
    let mut begin = 0;
    for (i, rec) in log.iter().enumerate() {
        match rec {
            LogRecord::Start(_) => begin = i,
            LogRecord::Episode(summary) => {
                trials.push(TrialRecord {
                    summary: summary.clone(),
                    tracking: compute_tracking_errors(&log[begin..i]).ok(),
                });
                begin = i + 1;
            }
            LogRecord::Step(_) => {}
        }
    }
    trials
}

/// Aggregate over the trials of one scenario and controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub controller: ControllerKind,
    pub tally: ScenarioTally,
    pub ratios: Ratios,
    pub osr: f64,
    /// Mean over the trials that carry tracking data.
    pub tracking: Option<TrackingErrors>,
    pub seeds: Vec<u64>,
}

/// Groups trials by scenario and controller and tallies each group. The
/// result does not depend on the order of `trials`.
pub fn aggregate_trials(trials: &[TrialRecord]) -> Result<Vec<ScenarioReport>, MetricsError> {
    if trials.is_empty() {
        return Err(MetricsError::NoTrials);
    }
    let mut groups: BTreeMap<(String, String), Vec<&TrialRecord>> = BTreeMap::new();
    for t in trials {
        let key = (t.summary.scenario.clone(), t.summary.controller.to_string());
        groups.entry(key).or_default().push(t);
    }
    groups
        .into_iter()
        .map(|((scenario, controller), mut group)| {
            // canonical order so floating-point sums are reproducible
            group.sort_by(|a, b| {
                a.summary
                    .seed
                    .cmp(&b.summary.seed)
                    .then_with(|| {
                        serde_json::to_string(*a)
                            .unwrap_or_default()
                            .cmp(&serde_json::to_string(*b).unwrap_or_default())
                    })
            });
            let n_gates = group[0].summary.n_gates;
            if group.iter().any(|t| t.summary.n_gates != n_gates) {
                return Err(MetricsError::MixedScenario {
                    scenario,
                    controller,
                });
            }
            let tally = ScenarioTally {
                n_gates,
                n_trials: group.len(),
                missed: group.iter().map(|t| t.summary.missed).sum(),
                hits: group.iter().map(|t| t.summary.hits).sum(),
                completed: group.iter().filter(|t| t.summary.completed).count(),
            };
            let ratios = compute_ratios(&tally)?;
            let tracked: Vec<&TrackingErrors> = group.iter().filter_map(|t| t.tracking.as_ref()).collect();
            let tracking = (!tracked.is_empty()).then(|| {
                let n = tracked.len() as f64;
                let sum = tracked.iter().fold(TrackingErrors::default(), |acc, e| TrackingErrors {
                    rmse: acc.rmse + e.rmse,
                    mae: acc.mae + e.mae,
                    max_abs: acc.max_abs.max(e.max_abs),
                    rmse_vel: acc.rmse_vel + e.rmse_vel,
                });
                TrackingErrors {
                    rmse: sum.rmse / n,
                    mae: sum.mae / n,
                    max_abs: sum.max_abs,
                    rmse_vel: sum.rmse_vel / n,
                }
            });
            Ok(ScenarioReport {
                scenario,
                controller: group[0].summary.controller,
                tally,
                ratios,
                osr: compute_osr(&ratios),
                tracking,
                seeds: group.iter().map(|t| t.summary.seed).collect(),
            })
        })
        .collect()
}

/// Percentage with one decimal.
pub fn percent(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// Aligned text table, one row per report.
pub fn render_table(reports: &[ScenarioReport]) -> String {
    let header = [
        "Scenario", "Controller", "OSR (%)", "P", "h", "f", "N_t", "G_s", "S (%)", "H (%)", "F (%)",
        "RMSE (m)", "MAE (m)", "Max Abs (m)", "RMSE Vel. (m/s)",
    ];
    let dash = || "---".to_string();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let t = &r.tally;
            let e = r.tracking;
            vec![
                r.scenario.clone(),
                r.controller.to_string(),
                percent(r.osr),
                t.missed.to_string(),
                t.hits.to_string(),
                t.completed.to_string(),
                t.n_trials.to_string(),
                t.scheduled().to_string(),
                percent(r.ratios.pass),
                percent(r.ratios.hit_free),
                percent(r.ratios.completion),
                e.map_or_else(dash, |e| format!("{:.3}", e.rmse)),
                e.map_or_else(dash, |e| format!("{:.3}", e.mae)),
                e.map_or_else(dash, |e| format!("{:.3}", e.max_abs)),
                e.map_or_else(dash, |e| format!("{:.3}", e.rmse_vel)),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let joined: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", joined.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let _ = writeln!(out, "{}", "-".repeat(total));
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}
