//! Full-batch population gradient descent, training traces and the online
//! gradient descent regret check.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{accuracy_on, gradient_on, loss_on, population_gradient, TwoLayerNet};
use crate::parity::{Component, EvalMode, ParityTask, WeightedSet, DEFAULT_EXACT_CAP};
use crate::rng::{LabRng, SeedStream};

/// Per-step learning rates and regularisation strengths; entry `t - 1`
/// drives step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Schedule {
    pub fn new(eta: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        if eta.len() != lambda.len() {
            return Err(Error::InvalidSchedule(format!("{} learning rates but {} lambdas", eta.len(), lambda.len())));
        }
        if let Some(v) = eta.iter().chain(&lambda).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidSchedule(format!("entry {v} is not a finite nonnegative number")));
        }
        Ok(Self { eta, lambda })
    }

    pub fn steps(&self) -> usize {
        self.eta.len()
    }

    /// Replace the learning rate of every step after the first.
    pub fn with_tail_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidSchedule(format!("tail learning rate {eta} is not a finite nonnegative number")));
        }
        for e in self.eta.iter_mut().skip(1) {
            *e = eta;
        }
        Ok(self)
    }
}

/// `η_1 = 1, λ_1 = 1/2`, then `η_t = k²/(T√q)` and `λ_t = lambda_tail`.
pub fn schedule_from_paper(steps: usize, k: usize, q: usize, n: usize, lambda_tail: f64) -> Result<Schedule> {
    let limit = k as f64 / n as f64;
    if !(0.0..=limit).contains(&lambda_tail) {
        return Err(Error::InvalidSchedule(format!("lambda_tail = {lambda_tail} must lie in [0, k/n = {limit}]")));
    }
    if q == 0 {
        return Err(Error::InvalidSchedule("q must be positive".into()));
    }
    let tail = (k * k) as f64 / (steps as f64 * (q as f64).sqrt());
    let eta = (0..steps).map(|t| if t == 0 { 1.0 } else { tail }).collect();
    let lambda = (0..steps).map(|t| if t == 0 { 0.5 } else { lambda_tail }).collect();
    Schedule::new(eta, lambda)
}

/// One simultaneous update of `W`, `b`, `u` from a single gradient bundle.
pub fn gd_step(net: &TwoLayerNet, task: &ParityTask, eta: f64, lambda: f64, mode: &mut EvalMode) -> Result<TwoLayerNet> {
    let grad = population_gradient(net, task, mode)?;
    let mut next = net.clone();
    next.apply_step(&grad, eta, lambda);
    if !next.is_finite() {
        return Err(Error::Numeric(format!("parameters diverged (eta = {eta}, lambda = {lambda})")));
    }
    Ok(next)
}

/// Where per-step loss and accuracy are measured.
#[derive(Debug, Clone)]
pub enum Evaluation {
    Exact { cap: usize },
    /// One fixed sample of `D_A`, drawn once per run from `stream`.
    Sample { samples: usize, stream: SeedStream },
}

impl Evaluation {
    /// Exact evaluation for exact gradients, otherwise an independent sample
    /// of the same size as the gradient batches.
    pub fn matching(mode: &EvalMode, stream: SeedStream) -> Self {
        match mode {
            EvalMode::Exact { cap } => Evaluation::Exact { cap: *cap },
            EvalMode::MonteCarlo { samples, .. } => Evaluation::Sample { samples: *samples, stream },
        }
    }

    pub fn weighted_set(&self, task: &ParityTask) -> Result<WeightedSet> {
        match self {
            Evaluation::Exact { cap } => WeightedSet::exact(task, Component::FullMixture, *cap),
            Evaluation::Sample { samples, stream } => WeightedSet::sample(task, *samples, &mut stream.rng()),
        }
    }
}

impl Default for Evaluation {
    fn default() -> Self {
        Evaluation::Exact { cap: DEFAULT_EXACT_CAP }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub evaluation: Evaluation,
    pub keep_snapshots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub u_norm: f64,
    /// `max_i ‖w_i^(t) - w_i^(1)‖`; absent before the first step.
    pub w_drift: Option<f64>,
    /// `max_i |b_i^(t) - b_i^(1)|`; absent before the first step.
    pub b_drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TrainRecord>,
    pub best_step: usize,
}

impl TrainTrace {
    pub fn best(&self) -> &TrainRecord {
        &self.records[self.best_step]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "loss", "accuracy", "u_norm", "w_drift", "b_drift"]).map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.loss.to_string(),
                r.accuracy.to_string(),
                r.u_norm.to_string(),
                opt(r.w_drift),
                opt(r.b_drift),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> TraceSummary {
        let best = self.best();
        let last = self.records.last().expect("trace holds the initial record");
        TraceSummary {
            steps: self.records.len() - 1,
            best_step: self.best_step,
            best_loss: best.loss,
            best_accuracy: best.accuracy,
            final_loss: last.loss,
            final_accuracy: last.accuracy,
        }
    }

    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(&self.summary())?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps: usize,
    pub best_step: usize,
    pub best_loss: f64,
    pub best_accuracy: f64,
    pub final_loss: f64,
    pub final_accuracy: f64,
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Schema(format!("{other:?}")),
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trace: TrainTrace,
    pub best_net: TwoLayerNet,
    /// `g^(1)`, absent when the schedule is empty.
    pub first_net: Option<TwoLayerNet>,
    /// Every iterate `g^(0..=T)` when requested.
    pub snapshots: Option<Vec<TwoLayerNet>>,
}

/// Run the schedule from `net0`, recording loss, accuracy and weight drift
/// after every step. The best iterate is the earliest one with minimal loss.
pub fn train(
    net0: &TwoLayerNet,
    task: &ParityTask,
    schedule: &Schedule,
    mode: &mut EvalMode,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    let eval = options.evaluation.weighted_set(task)?;
    let mut snapshots = options.keep_snapshots.then(|| vec![net0.clone()]);
    let mut records = vec![record(0, net0, &eval, None)];
    let mut best_net = net0.clone();
    let mut best_step = 0;
    let mut net = net0.clone();
    let mut first: Option<TwoLayerNet> = None;
    for t in 0..schedule.steps() {
        net = gd_step(&net, task, schedule.eta[t], schedule.lambda[t], mode)?;
        let anchor = first.get_or_insert_with(|| net.clone());
        let rec = record(t + 1, &net, &eval, Some(anchor));
        if rec.loss < records[best_step].loss {
            best_step = t + 1;
            best_net = net.clone();
        }
        records.push(rec);
        if let Some(s) = snapshots.as_mut() {
            s.push(net.clone());
        }
    }
    Ok(TrainOutcome { trace: TrainTrace { records, best_step }, best_net, first_net: first, snapshots })
}

fn record(step: usize, net: &TwoLayerNet, eval: &WeightedSet, anchor: Option<&TwoLayerNet>) -> TrainRecord {
    let (w_drift, b_drift) = match anchor {
        Some(a) => {
            let (w, b) = drift(net, a);
            (Some(w), Some(b))
        }
        None => (None, None),
    };
    TrainRecord {
        step,
        loss: loss_on(net, eval),
        accuracy: accuracy_on(net, eval),
        u_norm: net.u.dot(&net.u).sqrt(),
        w_drift,
        b_drift,
    }
}

/// `(max_i ‖w_i - w'_i‖, max_i |b_i - b'_i|)`.
pub fn drift(net: &TwoLayerNet, anchor: &TwoLayerNet) -> (f64, f64) {
    let w = net
        .w
        .rows()
        .into_iter()
        .zip(anchor.w.rows())
        .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let b = net.b.iter().zip(anchor.b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    (w, b)
}

/// `P(sign(h(x)) = y)` under `D_A`; a zero prediction is an error.
pub fn accuracy(predictor: impl Fn(&[f64]) -> f64, task: &ParityTask, mode: &mut EvalMode) -> Result<f64> {
    let set = mode.draw(task)?;
    Ok(set.expectation(|x, y| if predictor(x) * y > 0.0 { 1.0 } else { 0.0 }))
}

/// A convex function `f_t` exposed through its value and gradient.
pub trait ConvexOracle {
    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>);
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> ConvexOracle for F {
    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        self(theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretReport {
    pub steps: usize,
    /// `(1/T) Σ f_t(θ_t)`.
    pub lhs: f64,
    /// `(1/T) Σ f_t(θ*)`.
    pub comparator: f64,
    /// Comparator average plus the three penalty terms.
    pub rhs: f64,
    pub holds: bool,
}

/// Run `θ_{t+1} = θ_t - η∇f_t(θ_t)` and evaluate both sides of
/// `avg f_t(θ_t) ≤ avg f_t(θ*) + ‖θ*‖²/(2ηT) + ‖θ_1‖·avg‖∇_t‖ + η·avg‖∇_t‖²`.
pub fn ogd_regret_check<O: ConvexOracle>(oracles: &[O], eta: f64, theta1: &[f64], theta_star: &[f64]) -> Result<RegretReport> {
    if oracles.is_empty() {
        return Err(Error::InvalidInput("empty function sequence".into()));
    }
    if theta1.len() != theta_star.len() {
        return Err(Error::InvalidInput("θ_1 and θ* differ in dimension".into()));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidInput(format!("step size {eta} must be positive")));
    }
    let t_count = oracles.len() as f64;
    let mut theta = theta1.to_vec();
    let (mut online, mut comparator, mut gnorm, mut gnorm_sq) = (0.0, 0.0, 0.0, 0.0);
    for f in oracles {
        let (v, g) = f.value_and_gradient(&theta);
        if g.len() != theta.len() {
            return Err(Error::InvalidInput("gradient dimension mismatch".into()));
        }
        let sq: f64 = g.iter().map(|x| x * x).sum();
        online += v;
        gnorm += sq.sqrt();
        gnorm_sq += sq;
        comparator += f.value_and_gradient(theta_star).0;
        for (th, gi) in theta.iter_mut().zip(&g) {
            *th -= eta * gi;
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let lhs = online / t_count;
    let comparator = comparator / t_count;
    let rhs = comparator
        + norm(theta_star).powi(2) / (2.0 * eta * t_count)
        + norm(theta1) * gnorm / t_count
        + eta * gnorm_sq / t_count;
    if !(lhs.is_finite() && rhs.is_finite()) {
        return Err(Error::Numeric(format!("regret sides lhs = {lhs}, rhs = {rhs}")));
    }
    Ok(RegretReport { steps: oracles.len(), lhs, comparator, rhs, holds: lhs <= rhs })
}

/// The convex second-layer problems seen while training: for each snapshot
/// `t ≥ 1` the hinge loss of `u ↦ Σ u_i σ(⟨w_i^(t), x⟩ + b_i^(t))` on `set`.
pub fn second_layer_oracles<'a>(snapshots: &'a [TwoLayerNet], set: &'a WeightedSet) -> Vec<Box<dyn ConvexOracle + 'a>> {
    snapshots
        .iter()
        .skip(1)
        .map(|net| {
            Box::new(move |u: &[f64]| {
                let mut probe = net.clone();
                probe.u = ndarray::Array1::from(u.to_vec());
                let g = gradient_on(&probe, set);
                (g.loss, g.du.to_vec())
            }) as Box<dyn ConvexOracle + 'a>
        })
        .collect()
}

/// `steps` separable quadratics `θ ↦ Σ_j a_j (θ_j - c_j)²` with
/// `a_j ~ U[0.1, 1)` and `c_j ~ U[-1, 1)`.
pub fn random_quadratic_oracles(dim: usize, steps: usize, rng: &mut LabRng) -> Vec<Box<dyn ConvexOracle>> {
    (0..steps)
        .map(|_| {
            let a: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..1.0)).collect();
            let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            Box::new(move |t: &[f64]| {
                let mut v = 0.0;
                let g = (0..t.len())
                    .map(|j| {
                        let d = t[j] - c[j];
                        v += a[j] * d * d;
                        2.0 * a[j] * d
                    })
                    .collect();
                (v, g)
            }) as Box<dyn ConvexOracle>
        })
        .collect()
}

impl ConvexOracle for Box<dyn ConvexOracle + '_> {
    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        (**self).value_and_gradient(theta)
    }
}
