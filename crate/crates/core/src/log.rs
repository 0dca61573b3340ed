//! Trajectory log records, one JSON object per line.

use std::io::{BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::{ControlFlags, ControllerKind};
use crate::env::{RewardTerms, Termination};
use crate::gates::{GateEvent, GateOutcome};
use crate::rigid_body::Quaternion;

/// Vehicle state at the start of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quaternion,
    pub omega: Vector3<f64>,
}

/// State after one policy step, with the command that was held over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quaternion,
    pub omega: Vector3<f64>,
    pub v_des: Vector3<f64>,
    /// Wind velocity and drag force on the last physics tick.
    pub v_wind: Vector3<f64>,
    pub f_w: Vector3<f64>,
    pub reward: RewardTerms,
    pub events: Vec<GateEvent>,
    pub flags: ControlFlags,
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub scenario: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub n_gates: usize,
    pub passed: usize,
    pub missed: usize,
    pub hits: usize,
    pub completed: bool,
    pub termination: Termination,
    pub steps: usize,
    /// Simulated time, s.
    pub duration: f64,
    pub wind_enabled: bool,
    pub outcomes: Vec<GateOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Start(StartRecord),
    Step(StepRecord),
    Episode(EpisodeSummary),
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}

pub fn write_ndjson<W: Write>(mut out: W, records: &[LogRecord]) -> Result<(), LogError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|source| LogError::Json { line: 0, source })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses every non-blank line.
pub fn read_ndjson<R: BufRead>(input: R) -> Result<Vec<LogRecord>, LogError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| LogError::Json { line: i + 1, source })?;
        records.push(rec);
    }
    Ok(records)
}
