use std::path::Path;

use wallclimb::error::IoError;
use wallclimb::io::{
    emit_force_report, emit_trajectory, force_report_string, load_scenario, load_trajectory, save_scenario, Units,
    FORCE_REPORT_HEADER,
};
use wallclimb::pipeline::plan_pipeline;
use wallclimb::scenario::builtin;

#[test]
fn trajectory_round_trip_is_exact() {
    let s = builtin("angled").unwrap();
    let record = plan_pipeline(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("angled.trajectory.json");
    emit_trajectory(&record, &path).unwrap();
    assert_eq!(load_trajectory(&path).unwrap(), record);
}

#[test]
fn millimetre_scenario_loads_as_metres() {
    let s = builtin("obstacle").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("obstacle.toml");
    save_scenario(&s, Units::Millimetres, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("units = \"mm\""));
    let back = load_scenario(&path).unwrap();
    assert_eq!(back.regions.len(), s.regions.len());
    for (a, b) in back.start.toes.iter().zip(&s.start.toes) {
        assert!((a - b).norm() < 1e-12);
    }
    for (a, b) in back.goal.iter().zip(&s.goal) {
        assert!((a - b).norm() < 1e-12);
    }
    assert!((back.robot.mass - s.robot.mass).abs() < 1e-12);
    assert_eq!(back.weights.rounds, s.weights.rounds);
}

#[test]
fn force_report_has_a_row_per_limb_and_instant() {
    let s = builtin("angled").unwrap();
    let record = plan_pipeline(&s).unwrap();
    let text = force_report_string(&record, &s.regions);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        FORCE_REPORT_HEADER
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 12 * 6 * s.weights.rounds);
    let lifted = rows.iter().filter(|r| r[10].is_empty()).count();
    assert_eq!(lifted, 6 * s.weights.rounds);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("angled.forces.csv");
    emit_force_report(&record, &s.regions, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn io_errors_name_the_file() {
    let missing = Path::new("/nonexistent/dir/plan.json");
    match load_trajectory(missing) {
        Err(e @ IoError::Io { .. }) => assert!(e.to_string().contains("/nonexistent/dir/plan.json")),
        other => panic!("unexpected {other:?}"),
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "format_version = 1\nunits = \"m\"\nname = 3\n").unwrap();
    match load_scenario(&path) {
        Err(e @ IoError::Parse { .. }) => assert!(e.to_string().contains("broken.toml")),
        other => panic!("unexpected {other:?}"),
    }
}
