//! Scenario batches on disk: one trajectory log per trial plus a summary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use gustbench_core::config::{ConfigError, ScenarioConfig};
use gustbench_core::control::ControllerKind;
use gustbench_core::env::{Env, EnvError};
use gustbench_core::log::{read_ndjson, write_ndjson, LogError};
use gustbench_core::metrics::{aggregate_trials, trials_from_log, MetricsError, ScenarioReport, TrialRecord};
use gustbench_core::policy::{PolicyError, PolicySource};
use gustbench_core::runner::{run_episode, RunError};

/// Aggregates written next to the trajectory logs; skipped when reading logs.
pub const SUMMARY_FILE: &str = "summary.ndjson";

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Log { path: PathBuf, source: LogError },
    #[error("no trajectory logs in {0}")]
    NoLogs(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    /// Built-in name or scenario file.
    pub scenario: String,
    /// `None` takes the scenario's own controller.
    pub controller: Option<ControllerKind>,
    /// `scripted:<kind>` or a weights file.
    pub policy: String,
    pub trials: usize,
    /// Seed of the first trial; trial `k` uses `seed + k`.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub reports: Vec<ScenarioReport>,
    pub logs: Vec<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BatchError + '_ {
    move |source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn log_file_name(scenario: &str, controller: ControllerKind, seed: u64) -> String {
    format!("{scenario}_{controller}_seed{seed}.ndjson")
}

/// Runs the trials, writes one log per trial and the summary into `out`.
pub fn run_batch(spec: &BatchSpec, out: &Path) -> Result<BatchOutput, BatchError> {
    let cfg = ScenarioConfig::resolve(&spec.scenario)?;
    let controller = spec.controller.unwrap_or(cfg.controller);
    let policy = PolicySource::parse(&spec.policy, cfg.scripted_speed, cfg.episode.v_cap)?;
    let name = cfg.name.clone();
    let mut env = Env::new(cfg, controller)?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;

    let mut trials = Vec::with_capacity(spec.trials);
    let mut logs = Vec::with_capacity(spec.trials);
    for k in 0..spec.trials as u64 {
        let seed = spec.seed.wrapping_add(k);
        let rollout = run_episode(&mut env, &policy, seed)?;
        let path = out.join(log_file_name(&name, controller, seed));
        let file = File::create(&path).map_err(io_err(&path))?;
        write_ndjson(BufWriter::new(file), &rollout.log).map_err(|source| BatchError::Log {
            path: path.clone(),
            source,
        })?;
        trials.push(rollout.trial);
        logs.push(path);
    }
    let reports = aggregate_trials(&trials)?;
    write_summary(out, &reports)?;
    Ok(BatchOutput { reports, logs })
}

/// Reads every trajectory log in `dir`, in file-name order.
pub fn read_trials(dir: &Path) -> Result<Vec<TrialRecord>, BatchError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|x| x == "ndjson")
                && p.file_name().is_some_and(|n| n != SUMMARY_FILE)
        })
        .collect();
    paths.sort();
    let mut trials = Vec::new();
    for path in paths {
        let file = File::open(&path).map_err(io_err(&path))?;
        let log = read_ndjson(BufReader::new(file)).map_err(|source| BatchError::Log {
            path: path.clone(),
            source,
        })?;
        trials.extend(trials_from_log(&log));
    }
    Ok(trials)
}

/// Aggregates the logs in `dir` and rewrites its summary.
pub fn eval_dir(dir: &Path) -> Result<Vec<ScenarioReport>, BatchError> {
    let trials = read_trials(dir)?;
    if trials.is_empty() {
        return Err(BatchError::NoLogs(dir.to_path_buf()));
    }
    let reports = aggregate_trials(&trials)?;
    write_summary(dir, &reports)?;
    Ok(reports)
}

pub fn write_summary(dir: &Path, reports: &[ScenarioReport]) -> Result<(), BatchError> {
    let path = dir.join(SUMMARY_FILE);
    let mut out = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    for r in reports {
        let line = serde_json::to_string(r).expect("reports contain only finite numbers");
        writeln!(out, "{line}").map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))
}
