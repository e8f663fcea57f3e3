use std::path::Path;
use std::sync::Arc;

use paritylab::experiments::{
    run_mnist_parity, run_synthetic_separation, run_theory_suite_with, summaries_from_csv, ExperimentConfig,
    ExperimentKind, GradientMode, TheorySettings, MNIST_FILES,
};
use paritylab::mnist::{build_strips, encode_idx, parse_idx, DigitSplit, Split};
use paritylab::plot::read_curves;
use paritylab::rng::SeedStream;
use paritylab::theory::GateConvention;
use paritylab::Error;
use rand::Rng;

fn small_synthetic(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_kind(ExperimentKind::Synthetic);
    c.apply_text("n = 10\nk = 3\nq = 16\nsteps = 12\nmode = exact\nseeds = 5\nfeatures = 32\n").unwrap();
    c.out = out.to_path_buf();
    c
}

#[test]
fn synthetic_run_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_synthetic_separation(&small_synthetic(a.path())).unwrap();
    let rb = run_synthetic_separation(&small_synthetic(b.path())).unwrap();
    assert_eq!(ra.dir.file_name(), rb.dir.file_name());
    assert_eq!(std::fs::read(&ra.curves).unwrap(), std::fs::read(&rb.curves).unwrap());
    assert_eq!(std::fs::read(&ra.summary_path).unwrap(), std::fs::read(&rb.summary_path).unwrap());

    // Rerunning into the same directory overwrites with identical bytes.
    let again = run_synthetic_separation(&small_synthetic(a.path())).unwrap();
    assert_eq!(again.dir, ra.dir);
    assert_eq!(std::fs::read(&again.curves).unwrap(), std::fs::read(&rb.curves).unwrap());
}

#[test]
fn synthetic_summary_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_synthetic(dir.path());
    let run = run_synthetic_separation(&config).unwrap();
    let rows = read_curves(&run.curves).unwrap();
    assert_eq!(rows.len(), 3 * (config.steps + 1));
    let from_csv = summaries_from_csv(&run.curves).unwrap();
    let seed = &run.summary["seeds"][0];
    let net = &seed["net"];
    assert_eq!(net["model"], from_csv[0].model);
    assert_eq!(net["best_accuracy"].as_f64().unwrap(), from_csv[0].best_accuracy);
    assert_eq!(net["final_loss"].as_f64().unwrap(), from_csv[0].final_loss);
    for (i, b) in seed["baselines"].as_array().unwrap().iter().enumerate() {
        assert_eq!(b["best_accuracy"].as_f64().unwrap(), from_csv[i + 1].best_accuracy);
        assert_eq!(b["final_accuracy"].as_f64().unwrap(), from_csv[i + 1].final_accuracy);
    }
    let best_base = from_csv[1..].iter().map(|s| s.best_accuracy).fold(0.0, f64::max);
    assert_eq!(seed["gap"].as_f64().unwrap(), from_csv[0].best_accuracy - best_base);
    assert_eq!(run.summary["linear_ceiling"], 0.75);
    assert_eq!(seed["hardness"].as_array().unwrap().len(), 2);
    assert!(run.plot.exists());
}

#[test]
fn narrow_network_records_infeasible_separator() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_synthetic(dir.path());
    config.q = 2;
    let run = run_synthetic_separation(&config).unwrap();
    assert_eq!(run.summary["seeds"][0]["separator"]["status"], "infeasible");
}

#[test]
fn exact_mode_beyond_cap_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_synthetic(dir.path());
    config.n = 30;
    config.mode = GradientMode::Exact;
    assert!(matches!(run_synthetic_separation(&config), Err(Error::Capacity { .. })));
}

fn write_digits(dir: &Path, names: (&str, &str), digits: &[u8], count: usize, seed: u64) {
    let mut rng = SeedStream::new(seed).rng();
    let labels: Vec<u8> = (0..count).map(|_| digits[rng.random_range(0..digits.len())]).collect();
    let mut pixels = Vec::with_capacity(count * 784);
    for &d in &labels {
        for r in 0..28 {
            for _ in 0..28 {
                pixels.push(if r / 2 == d as usize + 2 { 230 } else { rng.random_range(0..30) });
            }
        }
    }
    std::fs::write(dir.join(names.0), encode_idx(&[count, 28, 28], &pixels)).unwrap();
    std::fs::write(dir.join(names.1), encode_idx(&[count], &labels)).unwrap();
}

fn digit_fixture(dir: &Path) {
    let all: Vec<u8> = (0..10).collect();
    write_digits(dir, (MNIST_FILES[0], MNIST_FILES[1]), &all, 400, 1);
    write_digits(dir, (MNIST_FILES[2], MNIST_FILES[3]), &all, 100, 2);
}

#[test]
fn mnist_pipeline_on_fixture() {
    let data = tempfile::tempdir().unwrap();
    digit_fixture(data.path());
    let out = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::for_kind(ExperimentKind::Mnist);
    c.apply_text(&format!(
        "mnist_dir = {}\nmnist_k = 3\ntrain_strips = 300\ntest_strips = 80\nepochs = 2\nwidth = 16\nfeatures = 16\nbatch = 32\n",
        data.path().display()
    ))
    .unwrap();
    c.out = out.path().to_path_buf();
    let run = run_mnist_parity(&c).unwrap();
    assert_eq!(run.summary["strip_width"], 84);
    let rows = read_curves(&run.curves).unwrap();
    assert_eq!(rows.len(), 4 * 3);
    let models: Vec<&str> = run.summary["models"].as_array().unwrap().iter().map(|m| m["model"].as_str().unwrap()).collect();
    assert_eq!(models, ["relu-net", "ntk-decoupled", "relu-random", "gaussian-rff"]);
    assert!(run.passed.is_some());

    let again = run_mnist_parity(&c).unwrap();
    assert_eq!(std::fs::read(&run.curves).unwrap(), std::fs::read(&again.curves).unwrap());
}

#[test]
fn missing_mnist_files_are_a_config_error() {
    let data = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::for_kind(ExperimentKind::Mnist);
    c.mnist_dir = Some(data.path().to_path_buf());
    assert!(matches!(run_mnist_parity(&c), Err(Error::Config(_))));
}

#[test]
fn strips_draw_only_from_their_split() {
    let dir = tempfile::tempdir().unwrap();
    write_digits(dir.path(), ("tr-img", "tr-lab"), &[0, 2, 4, 6, 8], 50, 3);
    write_digits(dir.path(), ("te-img", "te-lab"), &[1, 3, 5, 7, 9], 50, 4);
    let train = Arc::new(DigitSplit::load(&dir.path().join("tr-img"), &dir.path().join("tr-lab")).unwrap());
    let test = Arc::new(DigitSplit::load(&dir.path().join("te-img"), &dir.path().join("te-lab")).unwrap());
    let mut rng = SeedStream::new(0).rng();
    let tr = build_strips(train, Split::Train, 3, 200, &mut rng).unwrap();
    let te = build_strips(test, Split::Test, 3, 200, &mut rng).unwrap();
    assert!((0..200).all(|i| tr.digits(i).iter().all(|d| d % 2 == 0)));
    assert!((0..200).all(|i| te.digits(i).iter().all(|d| d % 2 == 1)));
    // Three odd digits always sum to an odd number.
    assert!(te.labels.iter().all(|&y| y == -1.0));
    assert!(tr.labels.iter().all(|&y| y == 1.0));
}

#[test]
fn truncated_idx_reports_expected_length() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = encode_idx(&[3, 28, 28], &[1; 3 * 784]);
    bytes.truncate(1000);
    let path = dir.path().join("cut");
    std::fs::write(&path, bytes).unwrap();
    match parse_idx(&path) {
        Err(Error::Parse { offset, message }) => {
            assert_eq!(offset, 1000);
            assert!(message.contains("2368"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

fn quick_settings(config: &ExperimentConfig) -> TheorySettings {
    let mut s = TheorySettings::from_config(config);
    s.zero_gradient.0 = 50;
    s.second_layer = (3, 12, 3, 16);
    s.ogd.0 = 20;
    s.uniform_gradient.0 = 100;
    s.varphi_samples = 50_000;
    s.first_step = (400, 12, 3);
    s.drift = (10, 3, 16, 8);
    s
}

#[test]
fn gate_convention_flag_moves_only_gate_sensitive_checks() {
    let out = tempfile::tempdir().unwrap();
    let mut relu6 = ExperimentConfig::for_kind(ExperimentKind::Verify);
    relu6.out = out.path().to_path_buf();
    let mut indicator = relu6.clone();
    indicator.set("gate_convention", "indicator").unwrap();
    assert_eq!(indicator.gate_convention, GateConvention::Indicator);

    let a = run_theory_suite_with(&relu6, quick_settings(&relu6)).unwrap();
    let b = run_theory_suite_with(&indicator, quick_settings(&indicator)).unwrap();
    assert!(b.check("zero_gradient").unwrap().passed);
    assert_eq!(a.check("staircase_exact").unwrap().detail, b.check("staircase_exact").unwrap().detail);
    assert!(b.check("staircase_exact").unwrap().passed);
    assert_ne!(a.check("uniform_gradient").unwrap().detail, b.check("uniform_gradient").unwrap().detail);
    assert!(out.path().join(relu6.run_dir().file_name().unwrap()).join("theory_report.json").exists());
}

#[test]
fn empty_config_lists_defaults() {
    let out = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::for_kind(ExperimentKind::Verify);
    c.apply_text("").unwrap();
    c.out = out.path().to_path_buf();
    let report = run_theory_suite_with(&c, quick_settings(&c)).unwrap();
    let json = serde_json::to_value(&report).unwrap();
    assert_eq!(json["settings"]["zero_gradient"][1], 12);
    assert_eq!(json["settings"]["gate_convention"], "relu6");
    assert!(report.checks.iter().any(|c| !c.asserted));
}
