//! Experiment drivers: configuration, the synthetic and digit-strip runs,
//! the verification suite and the hardness evaluator. Every run writes its
//! artifacts under `<out>/<kind>-<hash>`, where the hash covers the whole
//! configuration except the output root.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::baselines::{
    decouple, make_feature_map, train_linear_hinge, Bandwidth, BaselineKind, BatchSource, EvalData, HingeModel,
    HingeTrainConfig, LinearModel, Optimizer, BANDWIDTH_PROBE, ADADELTA_EPS, ADADELTA_RHO,
};
use crate::error::{Error, Result};
use crate::fourier::{hardness_bound, hardness_report, parseval_audit, HardnessReport};
use crate::mnist::{build_strips, DigitSplit, Split};
use crate::net::{Activation, TwoLayerNet};
use crate::parity::{Component, EvalMode, ParityTask, WeightedSet, DEFAULT_EXACT_CAP};
use crate::plot::{emit_plot_with_references, write_curves, CurveRow};
use crate::rng::{streams, SeedStream};
use crate::theory::{
    build_separator, first_step_diagnostics, staircase, ternary_zero_sum_probability, uniform_gradient_stat, varphi,
    weight_drift_check, loss_lip_check, zero_gradient_check, GateConvention, VarphiMode,
};
use crate::train::{
    gd_step, ogd_regret_check, random_quadratic_oracles, schedule_from_paper, train, Evaluation, TrainOptions,
};

/// Accuracy of a single subset coordinate on `D_A`: perfect on the
/// correlated half, chance on the uniform half.
pub const LINEAR_CEILING: f64 = 0.75;

pub const MNIST_FILES: [&str; 4] =
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Synthetic,
    Mnist,
    Verify,
    Bound,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Synthetic => "synthetic",
            ExperimentKind::Mnist => "mnist",
            ExperimentKind::Verify => "verify",
            ExperimentKind::Bound => "bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    Exact,
    Mc,
}

/// Everything a run depends on. Parsed from flat `key = value` text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub k: usize,
    pub q: usize,
    pub steps: usize,
    pub mode: GradientMode,
    pub mc_samples: usize,
    /// Learning rate after the first step; `None` keeps `k²/(T√q)`.
    pub eta_tail: Option<f64>,
    pub lambda_tail: f64,
    pub baselines: Vec<BaselineKind>,
    pub features: usize,
    pub norm_budget: Option<f64>,
    /// Fourier-feature bandwidth; `None` uses the median heuristic.
    pub bandwidth: Option<f64>,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    /// Matching tolerance of the separator, as a multiple of `1/k`.
    pub separator_epsilon: f64,
    pub separator_min_bucket: usize,
    pub gate_convention: GateConvention,
    pub mnist_dir: Option<PathBuf>,
    pub mnist_k: usize,
    pub train_strips: usize,
    pub test_strips: usize,
    pub epochs: usize,
    pub batch: usize,
    pub width: usize,
    pub bound_budget: f64,
    #[serde(skip)]
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Synthetic,
            seeds: vec![0, 1, 2],
            n: 50,
            k: 3,
            q: 512,
            steps: 200,
            mode: GradientMode::Mc,
            mc_samples: 8192,
            eta_tail: Some(1.0),
            lambda_tail: 0.0,
            baselines: vec![BaselineKind::ReluRandom, BaselineKind::GaussianRff],
            features: 512,
            norm_budget: None,
            bandwidth: None,
            adadelta_rho: ADADELTA_RHO,
            adadelta_eps: ADADELTA_EPS,
            separator_epsilon: 0.1,
            separator_min_bucket: 1,
            gate_convention: GateConvention::Relu6,
            mnist_dir: None,
            mnist_k: 1,
            train_strips: 60_000,
            test_strips: 10_000,
            epochs: 20,
            batch: 128,
            width: 512,
            bound_budget: 1.0,
            out: PathBuf::from("runs"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_optional(key: &str, value: &str, none: &str) -> Result<Option<f64>> {
    if value == none {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl ExperimentConfig {
    pub fn for_kind(kind: ExperimentKind) -> Self {
        Self { kind, ..Self::default() }
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "experiment" => {
                self.kind = match v {
                    "synthetic" => ExperimentKind::Synthetic,
                    "mnist" => ExperimentKind::Mnist,
                    "verify" => ExperimentKind::Verify,
                    "bound" => ExperimentKind::Bound,
                    other => return Err(Error::Config(format!("unknown experiment {other:?}"))),
                }
            }
            "seed" => self.seeds = vec![parse("seed", v)?],
            "seeds" => {
                self.seeds = v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse("seeds", s.trim())).collect::<Result<_>>()?
            }
            "n" => self.n = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "q" => self.q = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "mode" => {
                self.mode = match v {
                    "exact" => GradientMode::Exact,
                    "mc" => GradientMode::Mc,
                    other => return Err(Error::Config(format!("mode must be exact or mc, got {other:?}"))),
                }
            }
            "mc_samples" => self.mc_samples = parse(key, v)?,
            "eta_tail" => self.eta_tail = parse_optional(key, v, "formula")?,
            "lambda_tail" => self.lambda_tail = parse(key, v)?,
            "baselines" => {
                self.baselines = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse().map_err(|e: Error| Error::Config(e.to_string())))
                    .collect::<Result<_>>()?
            }
            "features" => self.features = parse(key, v)?,
            "norm_budget" => self.norm_budget = parse_optional(key, v, "none")?,
            "bandwidth" => self.bandwidth = parse_optional(key, v, "median")?,
            "adadelta_rho" => self.adadelta_rho = parse(key, v)?,
            "adadelta_eps" => self.adadelta_eps = parse(key, v)?,
            "separator_epsilon" => self.separator_epsilon = parse(key, v)?,
            "separator_min_bucket" => self.separator_min_bucket = parse(key, v)?,
            "gate_convention" => {
                self.gate_convention = match v {
                    "relu6" => GateConvention::Relu6,
                    "indicator" => GateConvention::Indicator,
                    other => return Err(Error::Config(format!("gate_convention must be relu6 or indicator, got {other:?}"))),
                }
            }
            "mnist_dir" => self.mnist_dir = Some(PathBuf::from(v)),
            "mnist_k" => self.mnist_k = parse(key, v)?,
            "train_strips" => self.train_strips = parse(key, v)?,
            "test_strips" => self.test_strips = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "width" => self.width = parse(key, v)?,
            "bound_budget" => self.bound_budget = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Apply flat text: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return fail("seed list is empty".into());
        }
        let k = if self.kind == ExperimentKind::Mnist { self.mnist_k } else { self.k };
        if self.kind != ExperimentKind::Mnist && k % 2 == 0 {
            return fail(format!("k = {k} must be odd"));
        }
        if k == 0 || (self.kind != ExperimentKind::Mnist && k > self.n) {
            return fail(format!("k = {k} must lie in 1..=n"));
        }
        if self.q == 0 || self.features == 0 || self.width == 0 || self.batch == 0 {
            return fail("q, features, width and batch must be positive".into());
        }
        if self.mode == GradientMode::Mc && self.mc_samples == 0 {
            return fail("mc_samples must be positive".into());
        }
        if self.kind == ExperimentKind::Mnist {
            let dir = self.mnist_dir.as_ref().ok_or_else(|| Error::Config("mnist_dir is not set".into()))?;
            for f in MNIST_FILES {
                if !dir.join(f).is_file() {
                    return fail(format!("missing data file {}", dir.join(f).display()));
                }
            }
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join(format!("{}-{}", self.kind.name(), self.hash()))
    }

    fn optimizer(&self) -> Optimizer {
        Optimizer::AdaDelta { rho: self.adadelta_rho, eps: self.adadelta_eps }
    }

    fn bandwidth_choice(&self) -> Bandwidth {
        self.bandwidth.map_or(Bandwidth::Median, Bandwidth::Fixed)
    }
}

/// Paths and summary of one finished run.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub curves: PathBuf,
    pub summary_path: PathBuf,
    pub plot: PathBuf,
    pub summary: Value,
    /// Whether the run met its pass criteria, when it has any.
    pub passed: Option<bool>,
}

/// Per-model metrics derived from its curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: String,
    pub best_accuracy: f64,
    pub best_accuracy_step: usize,
    pub final_accuracy: f64,
    pub min_loss: f64,
    pub final_loss: f64,
}

pub fn summarize(model: &str, rows: &[CurveRow]) -> ModelSummary {
    let mine: Vec<&CurveRow> = rows.iter().filter(|r| r.model == model).collect();
    let mut best = mine[0];
    for r in &mine {
        if r.accuracy > best.accuracy {
            best = r;
        }
    }
    let last = mine[mine.len() - 1];
    ModelSummary {
        model: model.to_string(),
        best_accuracy: best.accuracy,
        best_accuracy_step: best.step,
        final_accuracy: last.accuracy,
        min_loss: mine.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min),
        final_loss: last.loss,
    }
}

fn finish(
    dir: PathBuf,
    rows: &[CurveRow],
    summary: Value,
    passed: Option<bool>,
    references: &[(&str, f64)],
) -> Result<RunArtifact> {
    std::fs::create_dir_all(&dir)?;
    let curves = dir.join("curves.csv");
    let summary_path = dir.join("summary.json");
    let plot = dir.join("plot.svg");
    write_curves(rows, &curves)?;
    std::fs::write(&summary_path, serde_json::to_vec_pretty(&summary)?)?;
    emit_plot_with_references(&curves, &plot, references)?;
    Ok(RunArtifact { dir, curves, summary_path, plot, summary, passed })
}

/// Pass thresholds of the synthetic run.
pub const NET_MIN_ACCURACY: f64 = 0.97;
pub const BASELINE_MAX_ACCURACY: f64 = 0.85;
pub const MIN_GAP: f64 = 0.12;

fn push_curve(rows: &mut Vec<CurveRow>, model: &str, points: impl IntoIterator<Item = (usize, f64, f64)>) {
    rows.extend(points.into_iter().map(|(step, accuracy, loss)| CurveRow { model: model.to_string(), step, accuracy, loss }));
}

/// Train the symmetric ReLU6 network and every configured baseline on the
/// same distribution and evaluation set, per seed.
pub fn run_synthetic_separation(config: &ExperimentConfig) -> Result<RunArtifact> {
    config.validate()?;
    let (n, k, q, steps) = (config.n, config.k, config.q, config.steps);
    let task = ParityTask::leading(n, k)?;
    let mut schedule = schedule_from_paper(steps, k, q, n, config.lambda_tail)?;
    if let Some(eta) = config.eta_tail {
        schedule = schedule.with_tail_eta(eta)?;
    }
    let mut rows = Vec::new();
    let mut per_seed = Vec::new();
    let mut passed = true;
    for &seed in &config.seeds {
        let root = SeedStream::new(seed);
        let net0 = TwoLayerNet::init_symmetric(q, n, k, root.substream(streams::INIT))?;
        let mut mode = match config.mode {
            GradientMode::Exact => EvalMode::Exact { cap: DEFAULT_EXACT_CAP },
            GradientMode::Mc => EvalMode::monte_carlo(config.mc_samples, root.substream(streams::GRADIENT).rng()),
        };
        let evaluation = Evaluation::matching(&mode, root.substream(streams::EVALUATION));
        let eval_set = evaluation.weighted_set(&task)?;
        let options = TrainOptions { evaluation, keep_snapshots: false };
        let outcome = train(&net0, &task, &schedule, &mut mode, &options)?;
        let net_name = format!("relu6-net-s{seed}");
        push_curve(&mut rows, &net_name, outcome.trace.records.iter().map(|r| (r.step, r.accuracy, r.loss)));

        let separator = match outcome.first_net.as_ref() {
            None => json!({ "status": "skipped" }),
            Some(net1) => {
                let eps = config.separator_epsilon / k as f64;
                match build_separator(net1, &task, eps, config.separator_min_bucket, Some(&eval_set)) {
                    Ok(c) => json!({
                        "status": "ok",
                        "margin": c.margin,
                        "l2_norm": c.l2_norm,
                        "l0_norm": c.l0_norm,
                        "bucket_sizes": c.bucket_sizes,
                        "max_match_error": c.max_match_error,
                    }),
                    Err(Error::SeparatorInfeasible { r }) => json!({ "status": "infeasible", "empty_bucket": r }),
                    Err(e) => return Err(e),
                }
            }
        };

        let probe = WeightedSet::sample(&task, BANDWIDTH_PROBE, &mut root.substream(streams::FEATURES).rng())?;
        let probe_rows = probe.rows(0, probe.len());
        let mut baseline_names = Vec::new();
        let mut hardness = Vec::new();
        for (idx, &kind) in config.baselines.iter().enumerate() {
            let mut feature_rng = root.substream(streams::FEATURES).substream(idx as u64 + 1).rng();
            let map = make_feature_map(kind, n, config.features, config.bandwidth_choice(), Some(probe_rows.view()), &mut feature_rng)?;
            let mut model = LinearModel::new(map, config.norm_budget);
            let train_config = HingeTrainConfig { epochs: steps, batch: config.mc_samples.max(1), optimizer: config.optimizer() };
            let mut rng = root.substream(streams::BASELINE_TRAIN).substream(idx as u64 + 1).rng();
            let data = crate::baselines::TrainingData::Task { task: &task, samples: config.mc_samples.max(1) };
            let curve = train_linear_hinge(&mut model, data, EvalData::Set(&eval_set), &train_config, &mut rng)?;
            let name = format!("{}-s{seed}", kind.name());
            push_curve(&mut rows, &name, curve.iter().map(|p| (p.step, p.accuracy, p.loss)));
            let budget = config.norm_budget.unwrap_or_else(|| model.weights.dot(&model.weights).sqrt());
            hardness.push(json!({ "model": name, "report": hardness_report(config.features, budget, k, n) }));
            baseline_names.push(name);
        }

        let net_summary = summarize(&net_name, &rows);
        let base_summaries: Vec<ModelSummary> = baseline_names.iter().map(|m| summarize(m, &rows)).collect();
        let best_baseline = base_summaries.iter().map(|s| s.best_accuracy).fold(0.0, f64::max);
        let gap = net_summary.best_accuracy - best_baseline;
        let seed_passed = net_summary.best_accuracy >= NET_MIN_ACCURACY
            && best_baseline <= BASELINE_MAX_ACCURACY
            && gap >= MIN_GAP;
        passed &= seed_passed;
        per_seed.push(json!({
            "seed": seed,
            "net": net_summary,
            "baselines": base_summaries,
            "gap": gap,
            "passed": seed_passed,
            "separator": separator,
            "hardness": hardness,
        }));
    }
    let summary = json!({
        "experiment": "synthetic",
        "config": config,
        "schedule": { "eta_first": schedule.eta.first(), "eta_tail": schedule.eta.get(1), "lambda_tail": config.lambda_tail },
        "linear_ceiling": LINEAR_CEILING,
        "thresholds": { "net_min_accuracy": NET_MIN_ACCURACY, "baseline_max_accuracy": BASELINE_MAX_ACCURACY, "min_gap": MIN_GAP },
        "seeds": per_seed,
        "passed": passed,
    });
    finish(config.run_dir(), &rows, summary, Some(passed), &[("linear ceiling", LINEAR_CEILING)])
}

/// Thresholds for the digit-strip run, by strip length.
fn mnist_thresholds(k: usize) -> Option<(f64, Option<f64>)> {
    match k {
        1 => Some((0.97, None)),
        3 => Some((0.70, Some(0.60))),
        _ => None,
    }
}

pub fn load_mnist(dir: &Path) -> Result<(Arc<DigitSplit>, Arc<DigitSplit>)> {
    let train = DigitSplit::load(&dir.join(MNIST_FILES[0]), &dir.join(MNIST_FILES[1]))?;
    let test = DigitSplit::load(&dir.join(MNIST_FILES[2]), &dir.join(MNIST_FILES[3]))?;
    Ok((Arc::new(train), Arc::new(test)))
}

/// Train the plain ReLU network, its frozen-gate linearization and both
/// random-feature models on digit strips, recording test accuracy after
/// every epoch.
pub fn run_mnist_parity(config: &ExperimentConfig) -> Result<RunArtifact> {
    config.validate()?;
    let dir = config.mnist_dir.as_ref().expect("validated");
    let (train_split, test_split) = load_mnist(dir)?;
    run_mnist_on(config, train_split, test_split)
}

/// [`run_mnist_parity`] on already loaded splits.
pub fn run_mnist_on(config: &ExperimentConfig, train_split: Arc<DigitSplit>, test_split: Arc<DigitSplit>) -> Result<RunArtifact> {
    let k = config.mnist_k;
    let seed = config.seeds[0];
    let root = SeedStream::new(seed);
    let strips = root.substream(streams::STRIPS);
    let train_set = build_strips(train_split, Split::Train, k, config.train_strips, &mut strips.substream(1).rng())?;
    let test_set = build_strips(test_split, Split::Test, k, config.test_strips, &mut strips.substream(2).rng())?;
    let d = train_set.dim();
    let train_config = HingeTrainConfig { epochs: config.epochs, batch: config.batch, optimizer: config.optimizer() };
    let eval = || EvalData::Source(&test_set as &dyn BatchSource);

    let mut rows = Vec::new();
    let mut run = |name: &str, model: &mut dyn HingeModel, stream: u64| -> Result<()> {
        let mut rng = root.substream(streams::BASELINE_TRAIN).substream(stream).rng();
        let curve = train_linear_hinge(
            model,
            crate::baselines::TrainingData::Source(&train_set as &dyn BatchSource),
            eval(),
            &train_config,
            &mut rng,
        )?;
        push_curve(&mut rows, name, curve.iter().map(|p| (p.step, p.accuracy, p.loss)));
        Ok(())
    };

    let net0 = TwoLayerNet::init_standard(config.width, d, Activation::Relu, &mut root.substream(streams::INIT).rng());
    let mut decoupled = decouple(&net0);
    let mut net = net0;
    run("relu-net", &mut net, 1)?;
    run("ntk-decoupled", &mut decoupled, 2)?;

    let probe_idx: Vec<usize> = (0..train_set.len().min(BANDWIDTH_PROBE)).collect();
    let (probe, _) = train_set.batch(&probe_idx);
    for (idx, &kind) in config.baselines.iter().enumerate() {
        let mut feature_rng = root.substream(streams::FEATURES).substream(idx as u64 + 1).rng();
        let map = make_feature_map(kind, d, config.features, config.bandwidth_choice(), Some(probe.view()), &mut feature_rng)?;
        let mut model = LinearModel::new(map, config.norm_budget);
        run(kind.name(), &mut model, idx as u64 + 3)?;
    }

    let mut models = vec!["relu-net".to_string(), "ntk-decoupled".to_string()];
    models.extend(config.baselines.iter().map(|b| b.name().to_string()));
    let summaries: Vec<ModelSummary> = models.iter().map(|m| summarize(m, &rows)).collect();
    let passed = mnist_thresholds(k).map(|(net_min, others_max)| {
        summaries[0].final_accuracy >= net_min
            && others_max.is_none_or(|cap| summaries[1..].iter().all(|s| s.final_accuracy <= cap))
    });
    let summary = json!({
        "experiment": "mnist",
        "config": config,
        "seed": seed,
        "strip_width": train_set.width(),
        "models": summaries,
        "passed": passed,
    });
    finish(config.run_dir(), &rows, summary, passed, &[])
}

/// One entry of the verification report.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryCheck {
    pub name: String,
    /// Whether the check counts toward the exit status.
    pub asserted: bool,
    pub passed: bool,
    pub detail: Value,
    pub error: Option<String>,
}

/// Pinned parameters of the verification suite.
#[derive(Debug, Clone, Serialize)]
pub struct TheorySettings {
    pub seed: u64,
    pub gate_convention: GateConvention,
    pub zero_gradient: (usize, usize, usize),
    pub second_layer: (usize, usize, usize, usize),
    pub parseval: (usize, usize),
    pub ogd: (usize, usize, usize, f64),
    /// `(trials, n, k, c, b)`; `b` sits close enough to the cap that the two
    /// gate conventions disagree on some inputs.
    pub uniform_gradient: (usize, usize, usize, f64, f64),
    pub varphi_samples: usize,
    pub first_step: (usize, usize, usize),
    pub drift: (usize, usize, usize, usize),
}

impl TheorySettings {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            seed: config.seeds[0],
            gate_convention: config.gate_convention,
            zero_gradient: (500, 12, 3),
            second_layer: (50, 16, 3, 64),
            parseval: (8, 64),
            ogd: (200, 4, 50, 0.05),
            uniform_gradient: (500, 14, 3, 10.0, 3.0),
            varphi_samples: 200_000,
            first_step: (10_000, 16, 3),
            drift: (12, 3, 64, 20),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub settings: TheorySettings,
    pub checks: Vec<TheoryCheck>,
    pub all_passed: bool,
}

impl TheoryReport {
    pub fn check(&self, name: &str) -> Option<&TheoryCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn run_check(name: &str, asserted: bool, f: impl FnOnce() -> Result<(bool, Value)>) -> TheoryCheck {
    match f() {
        Ok((passed, detail)) => TheoryCheck { name: name.into(), asserted, passed, detail, error: None },
        Err(e) => TheoryCheck { name: name.into(), asserted, passed: false, detail: Value::Null, error: Some(e.to_string()) },
    }
}

/// Draw a ternary weight vector whose subset coordinates sum to zero.
pub fn admissible_weights(task: &ParityTask, rng: &mut impl Rng) -> Vec<i8> {
    loop {
        let w: Vec<i8> = (0..task.n()).map(|_| rng.random_range(-1..=1)).collect();
        if task.subset().iter().map(|&j| w[j] as i32).sum::<i32>() == 0 {
            return w;
        }
    }
}

/// Run every theory check at its pinned parameters. Failures and errors
/// are recorded per check; the report is also written to the run directory.
pub fn run_theory_suite(config: &ExperimentConfig) -> Result<TheoryReport> {
    run_theory_suite_with(config, TheorySettings::from_config(config))
}

/// [`run_theory_suite`] with explicit settings.
pub fn run_theory_suite_with(config: &ExperimentConfig, settings: TheorySettings) -> Result<TheoryReport> {
    let root = SeedStream::new(settings.seed).substream(streams::THEORY);
    let convention = settings.gate_convention;
    let mut checks = Vec::new();

    checks.push(run_check("zero_gradient", true, || {
        let (trials, n, k) = settings.zero_gradient;
        let task = ParityTask::leading(n, k)?;
        let mut rng = root.substream(1).rng();
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let w = admissible_weights(&task, &mut rng);
            let b = rng.random_range(-1.0..1.0);
            let r = zero_gradient_check(&w, b, &task, convention)?;
            worst = worst.max(r.max_abs_off_a).max(r.abs_bias_term);
        }
        Ok((worst <= 1e-12, json!({ "trials": trials, "max_abs": worst })))
    }));

    checks.push(run_check("staircase_exact", true, || {
        let mut rows = Vec::new();
        let mut ok = true;
        for k in (3..=13).step_by(2) {
            let r = staircase(k)?;
            ok &= r.exact_max_error <= 1e-12;
            rows.push(json!({ "k": k, "exact_max_error": r.exact_max_error, "exact_coefficients": r.exact_coefficients }));
        }
        Ok((ok, Value::Array(rows)))
    }));

    checks.push(run_check("staircase_written", false, || {
        let mut rows = Vec::new();
        let mut ok = true;
        for k in (3..=13).step_by(2) {
            let r = staircase(k)?;
            ok &= r.identity_max_error <= 1e-12;
            rows.push(json!({
                "k": k,
                "capped_error": r.identity_max_error,
                "uncapped_error": r.uncapped_max_error,
                "cap_binds": r.cap_binds,
            }));
        }
        Ok((ok, Value::Array(rows)))
    }));

    checks.push(run_check("second_layer_bound", true, || {
        let (seeds, n, k, q) = settings.second_layer;
        let task = ParityTask::leading(n, k)?;
        let bound = k as f64 / (n as f64).sqrt();
        let mut worst: f64 = 0.0;
        for s in 0..seeds as u64 {
            let net0 = TwoLayerNet::init_symmetric(q, n, k, root.substream(2).substream(s))?;
            let net1 = gd_step(&net0, &task, 1.0, 0.5, &mut EvalMode::exact())?;
            worst = worst.max(net1.u.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
        }
        Ok((worst <= bound + 1e-9, json!({ "seeds": seeds, "max_abs_u": worst, "bound": bound })))
    }));

    checks.push(run_check("parseval", true, || {
        let (n, features) = settings.parseval;
        let mut rng = root.substream(3).rng();
        let map = make_feature_map(BaselineKind::ReluRandom, n, features, Bandwidth::Median, None, &mut rng)?.clamped();
        let r = parseval_audit(&map, n, DEFAULT_EXACT_CAP)?;
        Ok((r.max_deviation <= 1e-10 && r.flagged.is_empty(), json!({ "max_deviation": r.max_deviation, "flagged": r.flagged })))
    }));

    checks.push(run_check("ogd_regret", true, || {
        let (trials, dim, steps, eta) = settings.ogd;
        let mut rng = root.substream(4).rng();
        let mut failures = 0;
        let mut min_slack = f64::INFINITY;
        for _ in 0..trials {
            let oracles = random_quadratic_oracles(dim, steps, &mut rng);
            let star: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = ogd_regret_check(&oracles, eta, &vec![0.0; dim], &star)?;
            failures += usize::from(!r.holds);
            min_slack = min_slack.min(r.rhs - r.lhs);
        }
        Ok((failures == 0, json!({ "trials": trials, "failures": failures, "min_slack": min_slack })))
    }));

    checks.push(run_check("hardness_bound", true, || {
        let triples = [(1usize, 1.0, 1usize), (4, 0.5, 3), (16, 2.0, 5), (64, 1.0, 7), (100, 0.25, 9), (512, 1.0, 3), (1024, 3.0, 11), (9, 0.1, 1), (256, 8.0, 13), (2, 0.0, 3)];
        let mut worst: f64 = 0.0;
        for (n_feat, b, k) in triples {
            let direct = 0.5 - (n_feat as f64).sqrt() * b / (2f64.powi(k as i32) * 2f64.sqrt());
            worst = worst.max((hardness_bound(n_feat, b, k) - direct).abs());
        }
        Ok((worst <= 1e-15, json!({ "triples": triples.len(), "max_abs_error": worst })))
    }));

    checks.push(run_check("uniform_gradient", true, || {
        let (trials, n, k, c, b) = settings.uniform_gradient;
        let task = ParityTask::leading(n, k)?;
        let r = uniform_gradient_stat(&task, n - 1, b, trials, c, convention, &mut root.substream(5).rng())?;
        let ok = r.coordinate_term.exceed_fraction <= r.allowed_fraction && r.bias_term.exceed_fraction <= r.allowed_fraction;
        Ok((ok, serde_json::to_value(&r)?))
    }));

    checks.push(run_check("varphi", true, || {
        let task = ParityTask::leading(16, 3)?;
        let mut rng = root.substream(6).rng();
        let mut worst_z: f64 = 0.0;
        let mut symmetric = true;
        for _ in 0..5 {
            let w: Vec<i8> = (0..16).map(|_| rng.random_range(-1..=1)).collect();
            let b = rng.random_range(0.0..2.0);
            let exact = varphi(&w, b, &task, VarphiMode::Exact)?;
            let flipped: Vec<i8> = w.iter().enumerate().map(|(j, &v)| if task.contains(j) { v } else { -v }).collect();
            symmetric &= varphi(&flipped, b, &task, VarphiMode::Exact)? == exact;
            let m = settings.varphi_samples;
            let mc = varphi(&w, b, &task, VarphiMode::MonteCarlo { samples: m, rng: &mut rng })?;
            let se = (exact * (1.0 - exact) / m as f64).sqrt().max(1e-12);
            worst_z = worst_z.max((mc - exact).abs() / se);
        }
        Ok((symmetric && worst_z <= 4.0, json!({ "max_z": worst_z, "sign_symmetric": symmetric })))
    }));

    let (q, n, k) = settings.first_step;
    let first = (|| -> Result<_> {
        let task = ParityTask::leading(n, k)?;
        let net0 = TwoLayerNet::init_symmetric(q, n, k, root.substream(7))?;
        let net1 = gd_step(&net0, &task, 1.0, 0.5, &mut EvalMode::exact())?;
        Ok((task, net0, net1))
    })();
    checks.push(run_check("first_step", true, || {
        let (task, net0, net1) = first.as_ref().map_err(|e| Error::Numeric(e.to_string()))?;
        let s = first_step_diagnostics(net0, net1, task)?.summary;
        let target = ternary_zero_sum_probability(k);
        let ok = (s.sum_zero_fraction - target).abs() <= 4.0 * s.sum_zero_std_error
            && s.good_fraction >= s.good_fraction_floor - 3.0 * s.good_std_error;
        Ok((ok, json!({ "summary": s, "zero_sum_probability": target })))
    }));
    checks.push(run_check("separator", true, || {
        let (task, _, net1) = first.as_ref().map_err(|e| Error::Numeric(e.to_string()))?;
        let c = build_separator(net1, task, config.separator_epsilon / k as f64, config.separator_min_bucket, None)?;
        Ok((
            c.classifies_all,
            json!({ "margin": c.margin, "l2_norm": c.l2_norm, "l0_norm": c.l0_norm, "bucket_sizes": c.bucket_sizes, "max_match_error": c.max_match_error }),
        ))
    }));

    let (dn, dk, dq, dsteps) = settings.drift;
    let drift_run = (|| -> Result<_> {
        let task = ParityTask::leading(dn, dk)?;
        let schedule = schedule_from_paper(dsteps, dk, dq, dn, 0.0)?;
        let net0 = TwoLayerNet::init_symmetric(dq, dn, dk, root.substream(8))?;
        let opts = TrainOptions { keep_snapshots: true, ..Default::default() };
        let out = train(&net0, &task, &schedule, &mut EvalMode::exact(), &opts)?;
        Ok((task, schedule, out.snapshots.expect("requested")))
    })();
    checks.push(run_check("weight_drift", true, || {
        let (_, schedule, snaps) = drift_run.as_ref().map_err(|e| Error::Numeric(e.to_string()))?;
        let r = weight_drift_check(snaps, schedule.eta[1], schedule.lambda[1], dk, dn)?;
        Ok((r.holds, json!({ "min_w_slack": r.min_w_slack, "min_b_slack": r.min_b_slack, "steps": r.rows.len() })))
    }));
    checks.push(run_check("loss_lipschitz", true, || {
        let (task, schedule, snaps) = drift_run.as_ref().map_err(|e| Error::Numeric(e.to_string()))?;
        let mut rng = root.substream(9).rng();
        let u_star: Vec<f64> = (0..snaps[0].width()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let set = WeightedSet::exact(task, Component::FullMixture, DEFAULT_EXACT_CAP)?;
        let r = loss_lip_check(snaps, &u_star, schedule.eta[1], schedule.lambda[1], task, &set)?;
        Ok((r.holds, json!({ "min_slack": r.min_slack, "steps": r.rows.len() })))
    }));

    let all_passed = checks.iter().filter(|c| c.asserted).all(|c| c.passed);
    let report = TheoryReport { settings, checks, all_passed };
    let dir = config.run_dir();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("theory_report.json"), serde_json::to_vec_pretty(&report)?)?;
    Ok(report)
}

/// Hardness bound for `features` features of norm `bound_budget` at the
/// configured `n` and `k`.
pub fn run_bound(config: &ExperimentConfig) -> Result<HardnessReport> {
    if config.k == 0 || config.k > config.n {
        return Err(Error::Config(format!("k = {} must lie in 1..=n", config.k)));
    }
    Ok(hardness_report(config.features, config.bound_budget, config.k, config.n))
}

/// Rebuild the per-model summaries of a curves file, for consistency checks.
pub fn summaries_from_csv(path: &Path) -> Result<Vec<ModelSummary>> {
    let rows = crate::plot::read_curves(path)?;
    let mut names: Vec<String> = Vec::new();
    for r in &rows {
        if !names.contains(&r.model) {
            names.push(r.model.clone());
        }
    }
    Ok(names.iter().map(|m| summarize(m, &rows)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_config_parses_and_flags_override() {
        let mut c = ExperimentConfig::default();
        c.apply_text("# comment\nn = 20\nseeds = 4, 5\nmode = exact\neta_tail = formula\nbaselines = gaussian-rff\n").unwrap();
        assert_eq!((c.n, c.seeds.clone(), c.mode, c.eta_tail), (20, vec![4, 5], GradientMode::Exact, None));
        assert_eq!(c.baselines, vec![BaselineKind::GaussianRff]);
        c.set("seed", "9").unwrap();
        assert_eq!(c.seeds, vec![9]);
        assert!(matches!(c.apply_text("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(c.apply_text("n 20"), Err(Error::Config(_))));
        assert!(matches!(c.set("baselines", "kernel-svm"), Err(Error::Config(_))));
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig { k: 4, ..Default::default() };
        assert!(c.validate().is_err());
        c.k = 3;
        c.seeds.clear();
        assert!(c.validate().is_err());
        let m = ExperimentConfig { kind: ExperimentKind::Mnist, mnist_dir: Some("/nonexistent".into()), ..Default::default() };
        assert!(matches!(m.validate(), Err(Error::Config(msg)) if msg.contains("missing data file")));
    }

    #[test]
    fn hash_ignores_output_root() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { out: "elsewhere".into(), ..Default::default() };
        let c = ExperimentConfig { q: 64, ..Default::default() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn summaries_pick_max_accuracy_and_last_row() {
        let rows: Vec<CurveRow> = [(0, 0.5, 1.0), (1, 0.9, 0.4), (2, 0.8, 0.3)]
            .iter()
            .map(|&(step, accuracy, loss)| CurveRow { model: "m".into(), step, accuracy, loss })
            .collect();
        let s = summarize("m", &rows);
        assert_eq!((s.best_accuracy, s.best_accuracy_step, s.final_accuracy, s.min_loss), (0.9, 1, 0.8, 0.3));
    }

    #[test]
    fn bound_warns_outside_regime() {
        let c = ExperimentConfig { features: 16, bound_budget: 2.0, k: 5, n: 50, ..Default::default() };
        let r = run_bound(&c).unwrap();
        assert!(r.warning.is_some());
        assert_eq!(r.bound, 0.5 - 4.0 * 2.0 / (32.0 * 2f64.sqrt()));
    }

    #[test]
    fn admissible_weights_sum_to_zero_on_subset() {
        let task = ParityTask::leading(9, 3).unwrap();
        let mut rng = SeedStream::new(0).rng();
        for _ in 0..50 {
            let w = admissible_weights(&task, &mut rng);
            assert_eq!(w[..3].iter().map(|&v| v as i32).sum::<i32>(), 0);
        }
    }

    #[test]
    fn linear_ceiling_from_enumeration() {
        // sign(x_1) is perfect on the correlated half and a coin flip on the uniform half.
        let task = ParityTask::leading(5, 3).unwrap();
        let set = WeightedSet::exact(&task, Component::FullMixture, DEFAULT_EXACT_CAP).unwrap();
        let acc = set.expectation(|x, y| if x[0] * y > 0.0 { 1.0 } else { 0.0 }) / set.total_weight();
        assert_eq!(acc, LINEAR_CEILING);
    }
}
