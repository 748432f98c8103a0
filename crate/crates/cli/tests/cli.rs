use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use isored::update::{StoredState, UpdateOptions};

const CYCLE: &str = "N 3\n1 2 1.0\n2 3 1.0\n3 1 1.0\n";
// The 3-cycle with a chord 2 → 1, column-normalised (primitive).
const CHORDED: &str = "N 3\n1 2 1.0\n2 3 1.0\n3 1 0.5\n2 1 0.5\n";

fn isored(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isored"))
        .args(args)
        .env_remove("ISORED_TOL")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn reduce_three_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "cycle.txt", CYCLE);
    let out = isored(&["reduce", &g, "--set", "1", "--lambda", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["members"], serde_json::json!([1]));
    assert_eq!(doc["entries"], serde_json::json!([[[0.25, 0.0]]]));

    let out = isored(&["reduce", &g, "--set", "1", "--lambda", "2", "--length", "3"]);
    assert_eq!(
        stdout_json(&out)["entries"],
        serde_json::json!([[[0.25, 0.0]]])
    );
    let out = isored(&["reduce", &g, "--set", "1", "--lambda", "2", "--length", "2"]);
    assert_eq!(
        stdout_json(&out)["entries"],
        serde_json::json!([[[0.0, 0.0]]])
    );
}

#[test]
fn lift_three_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "cycle.txt", CYCLE);
    let out = isored(&["lift", &g, "--set", "1", "--lambda", "1", "--vector", "1"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("vector"));
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "cycle.txt", CYCLE);
    let bad = write(dir.path(), "bad.txt", "N 2\n1 5 1.0\n");
    for args in [
        vec!["reduce", "missing-file.txt"],
        vec!["reduce", bad.as_str()],
        vec!["reduce", g.as_str(), "--set", "0"],
        vec!["reduce", g.as_str(), "--lambda", "x"],
        vec!["reduce", g.as_str(), "--tol", "not-a-number"],
        vec!["frobnicate"],
    ] {
        let out = isored(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    // Any single vertex of the 3-cycle is a structural set.
    let out = isored(&["reduce", &g, "--set", "2"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn verify_three_cycle_passes() {
    let out = isored(&["verify", "--format", "table"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text
        .lines()
        .all(|l| l.starts_with("PASS") || l.starts_with("SKIP")));
    assert!(text.contains("eigen-restriction"));
    assert!(String::from_utf8(out.stderr).unwrap().contains("elapsed"));
}

#[test]
fn update_then_verify_state_and_detect_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "chorded.txt", CHORDED);
    let delta = write(
        dir.path(),
        "delta.json",
        r#"[{"op": "add_edge", "i": 3, "j": 2, "w": 0.5}]"#,
    );
    let state_dir = dir.path().join("state");
    let state = state_dir.to_str().unwrap();
    let out = isored(&[
        "update", "--graph", &g, "--set", "1", "--delta", &delta, "--save", state,
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = stdout_json(&out);
    assert_eq!(doc["promoted"], serde_json::json!([3]));
    assert_eq!(doc["members"], serde_json::json!([1, 3]));

    let out = isored(&["verify", "--state", state]);
    assert_eq!(out.status.code(), Some(0));

    let mut s = StoredState::load(&state_dir, UpdateOptions::default()).unwrap();
    s.corrupt_matrix_entry(0, 0, s.extended().get(0, 0) + 1e-6);
    s.save(&state_dir).unwrap();
    let out = isored(&["verify", "--state", state]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("invariant failed: stored-state"), "{err}");

    // Inadmissible delta: vertex 1 loses every in-edge.
    let gone = write(
        dir.path(),
        "gone.json",
        r#"[{"op": "remove_edge", "i": 3, "j": 1}, {"op": "remove_edge", "i": 2, "j": 1}]"#,
    );
    let out = isored(&["update", "--graph", &g, "--delta", &gone]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_is_deterministic() {
    let args = [
        "bench",
        "--n",
        "12",
        "--trials",
        "4",
        "--seed",
        "5",
        "--check-equivalence",
    ];
    let a = isored(&args);
    let b = isored(&args);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(a.stdout, b.stdout);
    let doc = stdout_json(&a);
    assert_eq!(doc["summary"]["equivalence_failures"], 0);
    assert_eq!(doc["trials"].as_array().unwrap().len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trials.csv");
    let out = dir.path().join("report.json");
    let run = isored(&[
        "bench",
        "--n",
        "12",
        "--trials",
        "4",
        "--seed",
        "5",
        "--check-equivalence",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(0));
    assert!(run.stdout.is_empty());
    assert_eq!(fs::read(&out).unwrap(), a.stdout);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 5);
}

#[test]
fn simulate_chorded_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "chorded.txt", CHORDED);
    let args = [
        "simulate", &g, "--set", "1,2", "--steps", "100000", "--seed", "3",
    ];
    let a = isored(&args);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(a.stdout, isored(&args).stdout);
    let doc = stdout_json(&a);
    assert_eq!(doc["kernel"].as_array().unwrap().len(), 2);
    assert!(doc["within_band"].as_u64().unwrap() >= 3);
}

#[test]
fn tolerance_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "cycle.txt", CYCLE);
    let out = Command::new(env!("CARGO_BIN_EXE_isored"))
        .args(["reduce", &g, "--set", "1"])
        .env("ISORED_TOL", "bogus")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_isored"))
        .args(["reduce", &g, "--set", "1"])
        .env("ISORED_TOL", "1e-10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
