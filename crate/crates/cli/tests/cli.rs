use std::path::Path;
use std::process::{Command, Output};

fn wallclimb(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wallclimb"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("running wallclimb")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn export_plan_check_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = wallclimb(&["export", "angled", "--units", "mm", "--out", "angled-mm.toml"], d);
    assert_eq!(code(&out), 0, "{out:?}");
    let text = std::fs::read_to_string(d.join("angled-mm.toml")).unwrap();
    assert!(text.contains("units = \"mm\""));

    let out = wallclimb(
        &["plan", "angled-mm.toml", "--out", "plan.json", "--csv", "plan.csv"],
        d,
    );
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(stdout(&out).trim_end().ends_with("PASS"));
    assert!(d.join("plan.json").exists());
    let csv = std::fs::read_to_string(d.join("plan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 12 * 6);

    let out = wallclimb(&["check", "plan.json", "--scenario", "angled-mm.toml"], d);
    assert_eq!(code(&out), 0, "{out:?}");

    let out = wallclimb(
        &[
            "report",
            "plan.json",
            "--scenario",
            "angled-mm.toml",
            "--csv",
            "again.csv",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{out:?}");
    assert_eq!(std::fs::read_to_string(d.join("again.csv")).unwrap(), csv);
}

#[test]
fn tampered_trajectory_fails_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&wallclimb(
            &["plan", "angled", "--out", "plan.json", "--csv", "plan.csv"],
            d
        )),
        0
    );
    let path = d.join("plan.json");
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let instant = &mut json["rounds"][0]["instants"][1];
    let fz = instant["forces"][0][2].as_f64().unwrap();
    instant["forces"][0][2] = serde_json::json!(fz + 1.0);
    std::fs::write(&path, serde_json::to_string_pretty(&json).unwrap()).unwrap();

    let out = wallclimb(&["check", "plan.json"], d);
    assert_eq!(code(&out), 1, "{out:?}");
    assert!(stdout(&out).contains("Equilibrium"));
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = wallclimb(&["plan", "no-such-scenario"], d);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-scenario"));

    assert_eq!(code(&wallclimb(&["check", "missing.json"], d)), 2);

    std::fs::write(d.join("broken.toml"), "format_version = 1\nunits = \"furlongs\"\n").unwrap();
    assert_eq!(code(&wallclimb(&["plan", "broken.toml"], d)), 2);

    assert_eq!(code(&wallclimb(&["sweep", "angled", "--alpha", "0:10"], d)), 2);
}

#[test]
fn small_sweep_prints_a_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = wallclimb(
        &[
            "sweep",
            "angled",
            "--alpha",
            "10:20:2",
            "--mu",
            "0.2:1.2:3",
            "--csv",
            "cells.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(stdout(&out).contains('#'));
    let csv = std::fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("alpha_deg,mu,label"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}
