use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ncm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_config_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncm(dir.path(), &["sample", "--config", "does/not/exist.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error[missing-file]: "), "{err}");
    assert!(err.contains("does/not/exist.json"));
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn unknown_config_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"system": "lorenz", "trajectorys": 3}"#);
    let o = ncm(dir.path(), &["sample", "--config", "c.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[config]: "));
}

#[test]
fn unknown_method_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncm(dir.path(), &["estimate", "--method", "cvstem,kalman"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kalman"));
}

#[test]
fn ncm_method_without_checkpoint_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "e.json", r#"{"checkpoint": "missing/checkpoint.json", "estimation": {"steps": 10}}"#);
    let o = ncm(dir.path(), &["estimate", "--config", "e.json", "--method", "ncm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing/checkpoint.json"));
}

#[test]
fn control_without_plan_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncm(dir.path(), &["control", "--config", "nope.json"]);
    assert_eq!(o.status.code(), Some(2));
    write(dir.path(), "c.json", r#"{"design": "no-plan-here"}"#);
    let o = ncm(dir.path(), &["control", "--config", "c.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-plan-here"));
}

#[test]
fn check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncm(dir.path(), &["check"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{out}");
    assert!(out.lines().count() >= 10);
    assert!(out.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn linear_sample_reports_the_largest_feasible_alpha() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "s.json",
        r#"{"system": "linear:-1", "variant": "contraction", "trajectories": 2, "steps": 10,
            "alpha_grid": [0.25, 0.5, 0.75, 1.0, 1.25, 1.5]}"#,
    );
    let o = ncm(dir.path(), &["sample", "--config", "s.json", "--out", "lin"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&dir.path().join("lin/report.json"));
    for t in report["trajectories"].as_array().unwrap() {
        assert_eq!(t["alpha_star"], 1.0);
        assert!((t["chi"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    }
    assert_eq!(report["dataset_rows"], 22);
}

#[test]
fn lorenz_sample_writes_dataset_and_curves_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"system": "lorenz", "trajectories": 2, "steps": 50, "alpha_grid": [1, 2, 3, 4, 5, 6]}"#;
    write(dir.path(), "s.json", cfg);
    for out in ["a", "b"] {
        let o = ncm(dir.path(), &["sample", "--config", "s.json", "--out", out, "--seed", "5"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = dir.path().join("a");
    let rows = fs::read_to_string(a.join("dataset.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 102);
    for s in 0..2 {
        let curve = fs::read_to_string(a.join(format!("curves/trajectory_{s:03}.csv"))).unwrap();
        assert_eq!(curve.lines().count(), 1 + 6);
    }
    for f in ["dataset.csv", "report.json", "curves/trajectory_001.csv", "trajectories/trajectory_000.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

fn constant_dataset(dir: &Path) {
    let mut text = String::from("s,i,t,x0,theta0\n");
    for s in 0..5 {
        for i in 0..8 {
            text.push_str(&format!("{s},{i},{},{},0.7\n", i as f64 * 0.1, (s * 8 + i) as f64 * 0.05));
        }
    }
    write(dir, "toy.csv", &text);
}

#[test]
fn training_a_constant_target_is_exact_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    constant_dataset(dir.path());
    write(
        dir.path(),
        "t.json",
        r#"{"dataset": "toy.csv", "train": {"hidden": 8, "layers": 1, "epochs": 50, "early_stop": 1e-9}}"#,
    );
    for out in ["r1", "r2"] {
        let o = ncm(dir.path(), &["train", "--config", "t.json", "--out", out, "--seed", "3"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let report = json(&dir.path().join("r1/report.json"));
    let last = report["history"].as_array().unwrap().last().unwrap().clone();
    assert!(last["test_mse"].as_f64().unwrap() < 1e-6);
    assert_eq!(
        fs::read(dir.path().join("r1/checkpoint.json")).unwrap(),
        fs::read(dir.path().join("r2/checkpoint.json")).unwrap()
    );
}

#[test]
fn grid_mode_emits_one_row_per_architecture() {
    let dir = tempfile::tempdir().unwrap();
    constant_dataset(dir.path());
    write(
        dir.path(),
        "g.json",
        r#"{"dataset": "toy.csv", "train": {"epochs": 2}, "grid": {"layers": [1, 2, 3], "hidden": [16, 32, 64]}}"#,
    );
    let o = ncm(dir.path(), &["train", "--config", "g.json", "--out", "grid"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("grid/grid.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 9);
}

#[test]
fn missing_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncm(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dataset.csv"));
}

#[test]
fn short_estimation_runs_every_method_on_one_grid() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "e.json",
        r#"{"estimation": {"steps": 30, "alpha_grid": [1, 2, 3, 4]}, "methods": ["cvstem", "ekf"]}"#,
    );
    let o = ncm(dir.path(), &["estimate", "--config", "e.json", "--out", "est", "--seed", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read_to_string(dir.path().join("est/cvstem/run.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("est/ekf/run.csv")).unwrap();
    let times = |s: &str| s.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(times(&a).len(), 31);
    assert_eq!(times(&a), times(&b));
    // same plant realization for both methods
    let states = |s: &str| s.lines().skip(1).map(|l| l.split(',').take(4).collect::<Vec<_>>().join(",")).collect::<Vec<_>>();
    assert_eq!(states(&a), states(&b));
}

#[test]
fn plan_then_control_on_a_small_scene() {
    let dir = tempfile::tempdir().unwrap();
    let control = r#"{"x0": [0, 0, 0, 0, 0, 0], "goal": [2, 1, 0, 0, 0, 0],
        "obstacles": [{"center": [1, -1.5], "radius": 0.5}], "tube_guess": 0.3,
        "planner": {"steps": 100}}"#;
    write(dir.path(), "p.json", &format!(r#"{{"control": {control}, "out": "plan"}}"#));
    let o = ncm(dir.path(), &["plan", "--config", "p.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let design = json(&dir.path().join("plan/design.json"));
    assert!(design["min_clearance"].as_f64().unwrap() >= 0.0);
    write(
        dir.path(),
        "c.json",
        &format!(r#"{{"control": {control}, "design": "plan", "methods": ["cvstem", "lqr"]}}"#),
    );
    let o = ncm(dir.path(), &["control", "--config", "c.json", "--out", "ctl", "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for m in ["cvstem", "lqr"] {
        let run = fs::read_to_string(dir.path().join(format!("ctl/{m}/run.csv"))).unwrap();
        assert_eq!(run.lines().count(), 1 + 101);
    }
}
