use std::path::Path;
use std::process::{Command, Output};

use gustbench_core::control::ControllerKind;
use gustbench_core::env::Termination;
use gustbench_core::log::{read_ndjson, write_ndjson, EpisodeSummary, LogRecord};

fn gustbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gustbench"))
        .args(args)
        .env_remove("GUSTBENCH_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_log(path: &Path) -> Vec<LogRecord> {
    read_ndjson(std::io::BufReader::new(std::fs::File::open(path).unwrap())).unwrap()
}

#[test]
fn run_writes_one_log_per_trial_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gustbench(&["run", "--scenario", "s1", "--controller", "indi", "--policy", "scripted:straight", "--trials", "3", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for seed in 0..3 {
        let log = read_log(&dir.path().join(format!("s1_indi_seed{seed}.ndjson")));
        assert!(matches!(log.first(), Some(LogRecord::Start(_))));
        assert!(matches!(log.last(), Some(LogRecord::Episode(s)) if s.seed == seed && s.completed));
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.ndjson")).unwrap();
    assert_eq!(summary.lines().count(), 1);
    assert!(stdout(&o).contains("s1"));

    // eval over the same directory reproduces the summary and is idempotent
    let e1 = gustbench(&["eval", out]);
    assert!(e1.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("summary.ndjson")).unwrap(), summary);
    let e2 = gustbench(&["eval", out]);
    assert_eq!(stdout(&e1), stdout(&e2));
    assert_eq!(stdout(&e1), stdout(&o));
}

#[test]
fn unknown_scenario_and_empty_dir_fail() {
    let o = gustbench(&["run", "--scenario", "nowhere", "--trials", "1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown scenario"));

    let dir = tempfile::tempdir().unwrap();
    let o = gustbench(&["eval", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn scenario_config_env_var_selects_the_default() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gustbench"))
        .args(["run", "--trials", "1", "--policy", "scripted:hover", "--out", dir.path().to_str().unwrap()])
        .env("GUSTBENCH_CONFIG", "s3")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("s3_indi_seed0.ndjson").exists());
}

#[test]
fn controller_choice_leaves_environment_draws_alone() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for c in ["indi", "pid"] {
        let o = gustbench(&["run", "--scenario", "s2", "--controller", c, "--trials", "2", "--seed", "5", "--out", out]);
        assert!(o.status.success());
    }
    for seed in [5, 6] {
        let indi = read_log(&dir.path().join(format!("s2_indi_seed{seed}.ndjson")));
        let pid = read_log(&dir.path().join(format!("s2_pid_seed{seed}.ndjson")));
        assert_eq!(indi[0], pid[0]);
        let (LogRecord::Step(a), LogRecord::Step(b)) = (&indi[1], &pid[1]) else {
            panic!("second record must be a step");
        };
        // same gusts and fans, different tracking
        assert_eq!(a.v_des, b.v_des);
        assert_ne!(a.p, b.p);
    }
}

#[test]
fn scenario_list_names_every_builtin() {
    let o = gustbench(&["scenario", "list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["training", "s1", "s2", "s3", "s4"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
    let shown = gustbench(&["scenario", "show", "s4"]);
    assert!(stdout(&shown).contains("half_range"));
}

/// Counts per scenario and controller: (name, controller, gates, P, h, f).
const REFERENCE_COUNTS: [(&str, ControllerKind, usize, usize, usize, usize); 8] = [
    ("I", ControllerKind::Indi, 6, 1, 1, 10),
    ("I", ControllerKind::Pid, 6, 6, 8, 9),
    ("II", ControllerKind::Indi, 6, 2, 3, 10),
    ("II", ControllerKind::Pid, 6, 20, 20, 0),
    ("III", ControllerKind::Indi, 4, 4, 5, 10),
    ("III", ControllerKind::Pid, 4, 12, 22, 6),
    ("IV", ControllerKind::Indi, 4, 3, 5, 9),
    ("IV", ControllerKind::Pid, 4, 18, 28, 0),
];

fn synthetic_summary(scenario: &str, controller: ControllerKind, n_gates: usize, seed: u64, missed: usize, hits: usize, completed: bool) -> EpisodeSummary {
    EpisodeSummary {
        scenario: scenario.to_string(),
        controller,
        seed,
        n_gates,
        passed: n_gates - missed,
        missed,
        hits,
        completed,
        termination: if completed { Termination::Completed } else { Termination::Timeout },
        steps: 0,
        duration: 0.0,
        wind_enabled: false,
        outcomes: Vec::new(),
    }
}

#[test]
fn eval_reproduces_the_reference_table() {
    let dir = tempfile::tempdir().unwrap();
    for (name, c, gates, p, h, f) in REFERENCE_COUNTS {
        // ten trials per row; misses and hits spread round-robin
        let records: Vec<LogRecord> = (0..10)
            .map(|k| {
                let share = |total: usize| total / 10 + usize::from(k < total % 10);
                LogRecord::Episode(synthetic_summary(name, c, gates, k as u64, share(p), share(h), k < f))
            })
            .collect();
        let file = std::fs::File::create(dir.path().join(format!("{name}_{c}.ndjson"))).unwrap();
        write_ndjson(file, &records).unwrap();
    }
    let o = gustbench(&["eval", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let osr: Vec<(String, String, String)> = text
        .lines()
        .skip(2)
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[0].to_string(), f[1].to_string(), f[2].to_string())
        })
        .collect();
    let expected = [
        ("I", "indi", "98.9"),
        ("I", "pid", "88.9"),
        ("II", "indi", "97.2"),
        ("II", "pid", "0.0"),
        ("III", "indi", "92.5"),
        ("III", "pid", "58.3"),
        ("IV", "indi", "90.0"),
        ("IV", "pid", "0.0"),
    ];
    assert_eq!(osr.len(), 8, "{text}");
    for (got, want) in osr.iter().zip(expected) {
        assert_eq!((got.0.as_str(), got.1.as_str(), got.2.as_str()), want);
    }
}
