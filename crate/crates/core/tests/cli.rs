use std::process::{Command, Output};

fn paritylab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paritylab")).args(args).output().unwrap()
}

#[test]
fn bound_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = paritylab(&["bound", "--n", "64", "--k", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["bound"].as_f64().unwrap().is_finite());
    assert_eq!(report["hypothesis_holds"], true);
}

#[test]
fn bound_warns_for_dense_parity() {
    let out = paritylab(&["bound", "--n", "16", "--k", "5"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn invalid_settings_exit_with_two() {
    assert_eq!(paritylab(&["bound", "--n", "8", "--k", "9"]).status.code(), Some(2));
    assert_eq!(paritylab(&["synthetic", "--mode", "closed-form"]).status.code(), Some(2));
    assert_eq!(paritylab(&["synthetic", "--set", "no_such_key=1"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "steps = many\n").unwrap();
    let out = paritylab(&["synthetic", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn mnist_without_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = paritylab(&["mnist", "--set", &format!("mnist_dir={}", dir.path().display())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing data file"));
}

#[test]
fn synthetic_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(&cfg, "# tiny run\nn = 10\nk = 3\nq = 8\nsteps = 40\nmode = exact\nfeatures = 16\nseeds = 0, 1\n").unwrap();
    let runs = dir.path().join("runs");
    let out = paritylab(&[
        "synthetic",
        "--config",
        cfg.to_str().unwrap(),
        "--steps",
        "2",
        "--seed",
        "3",
        "--out",
        runs.to_str().unwrap(),
    ]);
    // Two steps is far too short to clear the accuracy thresholds.
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let dirs: Vec<_> = std::fs::read_dir(&runs).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    for file in ["curves.csv", "summary.json", "plot.svg"] {
        assert!(dirs[0].join(file).exists(), "{file}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dirs[0].join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["steps"], 2);
    assert_eq!(summary["config"]["seeds"], serde_json::json!([3]));
    assert_eq!(summary["config"]["q"], 8);
}
