use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dose_response::sim::SimScenario;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dose-response"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn simulate_small(dir: &Path) {
    let mut scenario = SimScenario::default_two_drug();
    scenario.trials.truncate(3);
    for arm in scenario.trials.iter_mut().flat_map(|t| t.arms.iter_mut()) {
        arm.n_subjects = 20;
    }
    fs::write(dir.join("scenario.json"), serde_json::to_string(&scenario).unwrap()).unwrap();
    let out = run(dir, &["simulate", "--scenario", "scenario.json", "--output", "sim"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("sim/subjects.csv").exists());
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    for f in ["subjects.csv", "truth.json", "scenario.json", "manifest.json"] {
        assert!(dir.path().join("simulated").join(f).exists(), "{f}");
    }
}

#[test]
fn malformed_csv_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.csv"),
        "trial_id,outcome,moderator,dose_a\nt1,1,0,0.5\nt1,yes,1,0.2\n",
    )
    .unwrap();
    let out = run(dir.path(), &["fit", "--data", "bad.csv", "--drugs", "a"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("bad.csv:3"), "{msg}");
    assert!(msg.contains("outcome"), "{msg}");
}

#[test]
fn missing_input_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["fit", "--data", "nowhere.csv"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));

    simulate_small(dir.path());
    let out = run(
        dir.path(),
        &["summarize", "--data", "sim/subjects.csv", "--output", "out"],
    );
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("missing artifact"));
}

#[test]
fn invalid_configuration() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path());
    let out = run(dir.path(), &["fit", "--data", "sim/subjects.csv", "--knots", "2,1"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = run(dir.path(), &["fit", "--data", "sim/subjects.csv", "--chains", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = run(dir.path(), &["fit", "--knots", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unconverged_fit_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path());
    let args = [
        "--data",
        "sim/subjects.csv",
        "--knots",
        "0",
        "--chains",
        "2",
        "--warmup",
        "0",
        "--draws",
        "6",
        "--seed",
        "1",
        "--output",
        "out",
    ];
    let out = run(dir.path(), &[&["fit"][..], &args].concat());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("not converged"));
    assert!(dir.path().join("out/fit/knots_0/draws.csv").exists());

    let out = run(dir.path(), &[&["summarize"][..], &args].concat());
    assert_eq!(out.status.code(), Some(3));
    let out = run(dir.path(), &[&["summarize", "--allow-unconverged"][..], &args].concat());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.path().join("out/summary/prob_best.json").exists());
}
