//! Fixed-embedding baselines: random ReLU and Fourier features, the
//! frozen-gate linearisation of a network, linear hinge training and the
//! AdaDelta optimiser.

use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::{FeatureKind, FeatureMap};
use crate::net::{gradient_on, hinge, TwoLayerNet};
use crate::parity::{ParityTask, WeightedSet};
use crate::rng::LabRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    ReluRandom,
    GaussianRff,
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu-random" => Ok(BaselineKind::ReluRandom),
            "gaussian-rff" => Ok(BaselineKind::GaussianRff),
            other => Err(invalid(format!("unknown feature kind {other:?}"))),
        }
    }
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::ReluRandom => "relu-random",
            BaselineKind::GaussianRff => "gaussian-rff",
        }
    }
}

/// Fourier-feature bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance over the first 1024 probe rows.
    Median,
}

pub const BANDWIDTH_PROBE: usize = 1024;

/// Median Euclidean distance over all pairs of the first 1024 rows.
pub fn median_pairwise_distance(xs: ArrayView2<'_, f64>) -> Result<f64> {
    let m = xs.nrows().min(BANDWIDTH_PROBE);
    if m < 2 {
        return Err(invalid("need at least two probe points for the median heuristic"));
    }
    let mut d = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            let a = xs.row(i);
            let b = xs.row(j);
            d.push(a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    Ok(if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] })
}

/// Draw a random feature map with `features` outputs. ReLU features use
/// `w ~ N(0, 1/d)` and zero bias; Fourier features use `w ~ N(0, 1/h²)` and
/// phases `U[0, 2π)`.
pub fn make_feature_map(
    kind: BaselineKind,
    input_dim: usize,
    features: usize,
    bandwidth: Bandwidth,
    probe: Option<ArrayView2<'_, f64>>,
    rng: &mut LabRng,
) -> Result<FeatureMap> {
    if features == 0 || input_dim == 0 {
        return Err(invalid("feature count and input dimension must be positive"));
    }
    match kind {
        BaselineKind::ReluRandom => {
            let dist = Normal::new(0.0, 1.0 / (input_dim as f64).sqrt()).expect("positive std");
            let weights = Array2::from_shape_simple_fn((features, input_dim), || dist.sample(rng));
            Ok(FeatureMap::new(FeatureKind::ReluRandom { weights, biases: Array1::zeros(features) }))
        }
        BaselineKind::GaussianRff => {
            let h = match bandwidth {
                Bandwidth::Fixed(h) => h,
                Bandwidth::Median => {
                    let probe = probe.ok_or_else(|| invalid("median bandwidth needs probe points"))?;
                    median_pairwise_distance(probe)?
                }
            };
            if !(h.is_finite() && h > 0.0) {
                return Err(invalid(format!("bandwidth {h} must be positive")));
            }
            let dist = Normal::new(0.0, 1.0 / h).expect("positive std");
            let weights = Array2::from_shape_simple_fn((features, input_dim), || dist.sample(rng));
            let phases = Array1::from_shape_simple_fn(features, || rng.random_range(0.0..2.0 * PI));
            Ok(FeatureMap::new(FeatureKind::GaussianRff { weights, phases, bandwidth: h }))
        }
    }
}

/// A model trained by minimising a weighted hinge loss over a flat
/// parameter vector.
pub trait HingeModel {
    fn num_params(&self) -> usize;
    fn predict_batch(&self, xs: ArrayView2<'_, f64>) -> Array1<f64>;
    /// `(Σ w ℓ, ∇_θ Σ w ℓ)` over the set.
    fn loss_gradient(&self, set: &WeightedSet) -> (f64, Vec<f64>);
    /// `θ ← θ + delta`.
    fn apply_update(&mut self, delta: &[f64]);
    /// Restore any constraint after an update.
    fn project(&mut self) {}
}

/// `x ↦ ⟨Ψ(x), w⟩`, optionally constrained to `‖w‖₂ ≤ B`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub map: FeatureMap,
    pub weights: Array1<f64>,
    pub norm_budget: Option<f64>,
}

impl LinearModel {
    pub fn new(map: FeatureMap, norm_budget: Option<f64>) -> Self {
        let weights = Array1::zeros(map.len());
        Self { map, weights, norm_budget }
    }
}

impl HingeModel for LinearModel {
    fn num_params(&self) -> usize {
        self.weights.len()
    }

    fn predict_batch(&self, xs: ArrayView2<'_, f64>) -> Array1<f64> {
        self.map.embed_batch(xs).dot(&self.weights)
    }

    fn loss_gradient(&self, set: &WeightedSet) -> (f64, Vec<f64>) {
        let mut grad = Array1::<f64>::zeros(self.weights.len());
        let mut loss = 0.0;
        set.for_each_chunk(|xs, ys, ws| {
            let feats = self.map.embed_batch(xs);
            let out = feats.dot(&self.weights);
            let coef: Array1<f64> = (0..out.len())
                .map(|s| {
                    let (l, d) = hinge(ys[s], out[s]);
                    loss += ws[s] * l;
                    ws[s] * d
                })
                .collect();
            grad += &feats.t().dot(&coef);
        });
        (loss, grad.to_vec())
    }

    fn apply_update(&mut self, delta: &[f64]) {
        Zip::from(&mut self.weights).and(delta).for_each(|w, d| *w += d);
    }

    fn project(&mut self) {
        if let Some(b) = self.norm_budget {
            let norm = self.weights.dot(&self.weights).sqrt();
            if norm > b {
                self.weights *= b / norm;
            }
        }
    }
}

/// First-order expansion of a network around its initial parameters `θ₀`:
/// `f(x) = g_{θ₀}(x) + ⟨∇_θ g_{θ₀}(x), θ - θ₀⟩`. Every gate is taken from
/// `θ₀`, so trainable weights enter only linearly.
#[derive(Debug, Clone)]
pub struct DecoupledNet {
    pub base: TwoLayerNet,
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub u: Array1<f64>,
}

pub fn decouple(net0: &TwoLayerNet) -> DecoupledNet {
    DecoupledNet { base: net0.clone(), w: net0.w.clone(), b: net0.b.clone(), u: net0.u.clone() }
}

struct Frozen {
    values: Array2<f64>,
    gates: Array2<f64>,
}

impl DecoupledNet {
    fn frozen(&self, xs: ArrayView2<'_, f64>) -> Frozen {
        let mut values = self.base.preactivations(xs);
        let mut gates = Array2::zeros(values.dim());
        let act = self.base.activation;
        Zip::from(&mut values).and(&mut gates).for_each(|v, g| {
            let (a, d) = act.eval(*v);
            *v = a;
            *g = d;
        });
        Frozen { values, gates }
    }

    /// Frozen gates `1{0 < ⟨w_i^(0), x⟩ + b_i^(0) < 6}` (or `> 0` for ReLU).
    pub fn gates(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        self.frozen(xs).gates
    }

    fn forward_with(&self, xs: ArrayView2<'_, f64>, fr: &Frozen) -> Array1<f64> {
        let mut dz = xs.dot(&(&self.w - &self.base.w).t());
        dz += &(&self.b - &self.base.b);
        dz *= &fr.gates;
        dz *= &self.base.u;
        let f0 = fr.values.dot(&self.base.u);
        f0 + dz.sum_axis(Axis(1)) + fr.values.dot(&(&self.u - &self.base.u))
    }

    /// Flattened parameters `(W row-major, b, u)`.
    pub fn params(&self) -> Vec<f64> {
        self.w.iter().chain(self.b.iter()).chain(self.u.iter()).copied().collect()
    }

    pub fn set_params(&mut self, theta: &[f64]) {
        let (wn, bn) = (self.w.len(), self.b.len());
        self.w.iter_mut().zip(&theta[..wn]).for_each(|(a, b)| *a = *b);
        self.b.iter_mut().zip(&theta[wn..wn + bn]).for_each(|(a, b)| *a = *b);
        self.u.iter_mut().zip(&theta[wn + bn..]).for_each(|(a, b)| *a = *b);
    }
}

impl HingeModel for DecoupledNet {
    fn num_params(&self) -> usize {
        self.w.len() + self.b.len() + self.u.len()
    }

    fn predict_batch(&self, xs: ArrayView2<'_, f64>) -> Array1<f64> {
        let fr = self.frozen(xs);
        self.forward_with(xs, &fr)
    }

    fn loss_gradient(&self, set: &WeightedSet) -> (f64, Vec<f64>) {
        let mut dw = Array2::<f64>::zeros(self.w.dim());
        let mut db = Array1::<f64>::zeros(self.b.len());
        let mut du = Array1::<f64>::zeros(self.u.len());
        let mut loss = 0.0;
        set.for_each_chunk(|xs, ys, ws| {
            let fr = self.frozen(xs);
            let out = self.forward_with(xs, &fr);
            let coef: Array1<f64> = (0..out.len())
                .map(|s| {
                    let (l, d) = hinge(ys[s], out[s]);
                    loss += ws[s] * l;
                    ws[s] * d
                })
                .collect();
            du += &fr.values.t().dot(&coef);
            let mut m = fr.gates;
            m *= &self.base.u;
            Zip::from(m.rows_mut()).and(&coef).for_each(|mut row, &c| row *= c);
            dw += &m.t().dot(&xs);
            db += &m.sum_axis(Axis(0));
        });
        (loss, dw.iter().chain(db.iter()).chain(du.iter()).copied().collect())
    }

    fn apply_update(&mut self, delta: &[f64]) {
        let (wn, bn) = (self.w.len(), self.b.len());
        self.w.iter_mut().zip(&delta[..wn]).for_each(|(a, d)| *a += d);
        self.b.iter_mut().zip(&delta[wn..wn + bn]).for_each(|(a, d)| *a += d);
        self.u.iter_mut().zip(&delta[wn + bn..]).for_each(|(a, d)| *a += d);
    }
}

/// The network itself, trained on all of `(W, b, u)`.
impl HingeModel for TwoLayerNet {
    fn num_params(&self) -> usize {
        self.w.len() + self.b.len() + self.u.len()
    }

    fn predict_batch(&self, xs: ArrayView2<'_, f64>) -> Array1<f64> {
        self.forward_batch(xs)
    }

    fn loss_gradient(&self, set: &WeightedSet) -> (f64, Vec<f64>) {
        let g = gradient_on(self, set);
        (g.loss, g.dw.iter().chain(g.db.iter()).chain(g.du.iter()).copied().collect())
    }

    fn apply_update(&mut self, delta: &[f64]) {
        let (wn, bn) = (self.w.len(), self.b.len());
        self.w.iter_mut().zip(&delta[..wn]).for_each(|(a, d)| *a += d);
        self.b.iter_mut().zip(&delta[wn..wn + bn]).for_each(|(a, d)| *a += d);
        self.u.iter_mut().zip(&delta[wn + bn..]).for_each(|(a, d)| *a += d);
    }
}

pub const ADADELTA_RHO: f64 = 0.95;
pub const ADADELTA_EPS: f64 = 1e-6;

/// AdaDelta accumulators: running means of squared gradients and squared
/// updates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub rho: f64,
    pub eps: f64,
    pub sq_grad: Vec<f64>,
    pub sq_update: Vec<f64>,
}

impl OptimizerState {
    pub fn new(len: usize, rho: f64, eps: f64) -> Self {
        Self { rho, eps, sq_grad: vec![0.0; len], sq_update: vec![0.0; len] }
    }

    /// One AdaDelta update `Δ = -√(E[Δ²] + ε)/√(E[g²] + ε) · g`.
    pub fn delta(&mut self, grads: &[f64]) -> Vec<f64> {
        let (rho, eps) = (self.rho, self.eps);
        grads
            .iter()
            .zip(self.sq_grad.iter_mut().zip(self.sq_update.iter_mut()))
            .map(|(&g, (eg, ed))| {
                *eg = rho * *eg + (1.0 - rho) * g * g;
                let d = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * g;
                *ed = rho * *ed + (1.0 - rho) * d * d;
                d
            })
            .collect()
    }
}

/// Apply one AdaDelta step to `params` in place.
pub fn adadelta_step(state: &mut OptimizerState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != grads.len() || state.sq_grad.len() != grads.len() {
        return Err(invalid("optimizer state, parameters and gradients differ in length"));
    }
    for (p, d) in params.iter_mut().zip(state.delta(grads)) {
        *p += d;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd { lr: f64 },
    AdaDelta { rho: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::AdaDelta { rho: ADADELTA_RHO, eps: ADADELTA_EPS }
    }
}

enum Stepper {
    Sgd(f64),
    AdaDelta(OptimizerState),
}

impl Stepper {
    fn delta(&mut self, g: &[f64]) -> Vec<f64> {
        match self {
            Stepper::Sgd(lr) => g.iter().map(|v| -*lr * v).collect(),
            Stepper::AdaDelta(s) => s.delta(g),
        }
    }
}

/// Labelled examples that can be gathered into dense batches.
pub trait BatchSource {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn dim(&self) -> usize;
    /// Rows `indices` and their `±1` labels.
    fn batch(&self, indices: &[usize]) -> (Array2<f64>, Vec<f64>);
}

/// A dense in-memory dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub xs: Array2<f64>,
    pub ys: Vec<f64>,
}

impl BatchSource for Dataset {
    fn len(&self) -> usize {
        self.ys.len()
    }

    fn dim(&self) -> usize {
        self.xs.ncols()
    }

    fn batch(&self, indices: &[usize]) -> (Array2<f64>, Vec<f64>) {
        (self.xs.select(Axis(0), indices), indices.iter().map(|&i| self.ys[i]).collect())
    }
}

pub enum TrainingData<'a> {
    /// Shuffled mini-batches; one epoch is one pass.
    Source(&'a dyn BatchSource),
    /// A fresh sample of `D_A` per step; one epoch is one step.
    Task { task: &'a ParityTask, samples: usize },
}

pub enum EvalData<'a> {
    Set(&'a WeightedSet),
    Source(&'a dyn BatchSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HingeTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub optimizer: Optimizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean hinge loss and accuracy (zero predictions count as errors).
pub fn evaluate<M: HingeModel + ?Sized>(model: &M, eval: &EvalData<'_>) -> (f64, f64) {
    let (mut loss, mut acc) = (0.0, 0.0);
    let mut tally = |out: &Array1<f64>, ys: &[f64], ws: &[f64]| {
        for s in 0..out.len() {
            loss += ws[s] * hinge(ys[s], out[s]).0;
            if out[s] * ys[s] > 0.0 {
                acc += ws[s];
            }
        }
    };
    match eval {
        EvalData::Set(set) => set.for_each_chunk(|xs, ys, ws| tally(&model.predict_batch(xs), ys, ws)),
        EvalData::Source(src) => {
            let m = src.len();
            let idx: Vec<usize> = (0..m).collect();
            for chunk in idx.chunks(1024) {
                let (xs, ys) = src.batch(chunk);
                let ws = vec![1.0; ys.len()];
                tally(&model.predict_batch(xs.view()), &ys, &ws);
            }
            return (loss / m as f64, acc / m as f64);
        }
    }
    (loss, acc)
}

/// Minimise the hinge loss of `model`, recording evaluation loss and
/// accuracy before training and after every epoch. Batches carry equal
/// weights summing to one, and the model is projected after each update.
pub fn train_linear_hinge<M: HingeModel + ?Sized>(
    model: &mut M,
    data: TrainingData<'_>,
    eval: EvalData<'_>,
    config: &HingeTrainConfig,
    rng: &mut LabRng,
) -> Result<Vec<CurvePoint>> {
    if config.batch == 0 {
        return Err(invalid("batch size must be positive"));
    }
    let mut stepper = match config.optimizer {
        Optimizer::Sgd { lr } => Stepper::Sgd(lr),
        Optimizer::AdaDelta { rho, eps } => Stepper::AdaDelta(OptimizerState::new(model.num_params(), rho, eps)),
    };
    let mut step = |model: &mut M, set: &WeightedSet| -> Result<()> {
        let (_, g) = model.loss_gradient(set);
        let delta = stepper.delta(&g);
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::Numeric("non-finite update".into()));
        }
        model.apply_update(&delta);
        model.project();
        Ok(())
    };
    let record = |model: &M, epoch: usize| {
        let (loss, accuracy) = evaluate(model, &eval);
        CurvePoint { step: epoch, loss, accuracy }
    };
    let mut curve = vec![record(model, 0)];
    let mut order: Vec<usize> = match &data {
        TrainingData::Source(src) => (0..src.len()).collect(),
        TrainingData::Task { .. } => Vec::new(),
    };
    for epoch in 1..=config.epochs {
        match &data {
            TrainingData::Source(src) => {
                order.shuffle(rng);
                for chunk in order.chunks(config.batch) {
                    let (xs, ys) = src.batch(chunk);
                    step(model, &WeightedSet::from_dense(xs, ys))?;
                }
            }
            TrainingData::Task { task, samples } => {
                step(model, &WeightedSet::sample(task, *samples, rng)?)?;
            }
        }
        curve.push(record(model, epoch));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;
    use crate::rng::SeedStream;
    use ndarray::array;

    #[test]
    fn unknown_kind() {
        assert!("rbf".parse::<BaselineKind>().is_err());
        assert_eq!("gaussian-rff".parse::<BaselineKind>().unwrap(), BaselineKind::GaussianRff);
    }

    #[test]
    fn relu_features_vanish_at_origin() {
        let mut rng = SeedStream::new(0).rng();
        let map = make_feature_map(BaselineKind::ReluRandom, 5, 16, Bandwidth::Median, None, &mut rng).unwrap();
        assert!(map.embed(&[0.0; 5]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rff_approximates_the_kernel() {
        let n = 10;
        let big = 2048;
        let mut rng = SeedStream::new(3).rng();
        let task = ParityTask::leading(n, 3).unwrap();
        let probe = WeightedSet::sample(&task, 64, &mut rng).unwrap();
        let xs = probe.rows(0, 64).to_owned();
        let h = 1.3;
        let map = make_feature_map(BaselineKind::GaussianRff, n, big, Bandwidth::Fixed(h), None, &mut rng).unwrap();
        let feats = map.embed_batch(xs.view());
        let self_k: f64 = feats.rows().into_iter().map(|r| r.dot(&r)).sum::<f64>() / 64.0;
        assert!((self_k - 1.0).abs() < 0.1, "{self_k}");
        let (a, b) = (xs.row(0), xs.row(1));
        let d2: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
        let k = (-d2 / (2.0 * h * h)).exp();
        let approx = feats.row(0).dot(&feats.row(1));
        assert!((approx - k).abs() < 5.0 / (big as f64).sqrt(), "{approx} vs {k}");
    }

    #[test]
    fn adadelta_hand_example() {
        let mut st = OptimizerState::new(1, 0.95, 1e-6);
        let mut p = [0.0];
        // Oracle: the recurrences unrolled by hand for g = 1.
        let (mut eg, mut ed, mut x) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..3 {
            eg = 0.95 * eg + 0.05;
            let d = -((ed + 1e-6).sqrt() / (eg + 1e-6).sqrt());
            ed = 0.95 * ed + 0.05 * d * d;
            x += d;
            adadelta_step(&mut st, &mut p, &[1.0]).unwrap();
            assert!((p[0] - x).abs() < 1e-12);
        }
        assert!((p[0] + 0.013568752982270057).abs() < 1e-12, "{}", p[0]);
    }

    #[test]
    fn adadelta_zero_gradient() {
        let mut st = OptimizerState::new(2, 0.95, 1e-6);
        st.sq_grad = vec![1.0, 2.0];
        let mut p = [1.0, 2.0];
        adadelta_step(&mut st, &mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, [1.0, 2.0]);
        assert_eq!(st.sq_grad, vec![0.95, 1.9]);
    }

    #[test]
    fn adadelta_is_scale_free() {
        let run = |g: f64| {
            let mut st = OptimizerState::new(1, 0.95, 1e-6);
            let mut last = 0.0;
            for _ in 0..2000 {
                last = st.delta(&[g])[0];
            }
            last
        };
        let (a, b) = (run(1.0), run(100.0));
        assert!(((a - b) / a).abs() < 0.05, "{a} {b}");
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let xs = array![[1.0, 0.2], [0.8, -0.1], [-1.0, 0.3], [-0.7, -0.2]];
        let ys = vec![1.0, 1.0, -1.0, -1.0];
        let data = Dataset { xs: xs.clone(), ys: ys.clone() };
        let table = FeatureMap::new(FeatureKind::ReluRandom { weights: array![[1.0, 0.0], [-1.0, 0.0]], biases: array![0.0, 0.0] });
        let mut model = LinearModel::new(table, None);
        let cfg = HingeTrainConfig { epochs: 50, batch: 2, optimizer: Optimizer::Sgd { lr: 0.5 } };
        let mut rng = SeedStream::new(1).rng();
        let curve = train_linear_hinge(&mut model, TrainingData::Source(&data), EvalData::Source(&data), &cfg, &mut rng).unwrap();
        assert_eq!(curve.len(), 51);
        assert_eq!(curve.last().unwrap().accuracy, 1.0);
    }

    #[test]
    fn projection_respects_budget() {
        let mut rng = SeedStream::new(2).rng();
        let task = ParityTask::leading(8, 3).unwrap();
        let map = make_feature_map(BaselineKind::ReluRandom, 8, 32, Bandwidth::Median, None, &mut rng).unwrap();
        let mut model = LinearModel::new(map, Some(0.3));
        let cfg = HingeTrainConfig { epochs: 30, batch: 1, optimizer: Optimizer::Sgd { lr: 1.0 } };
        let eval = WeightedSet::sample(&task, 256, &mut rng).unwrap();
        train_linear_hinge(&mut model, TrainingData::Task { task: &task, samples: 128 }, EvalData::Set(&eval), &cfg, &mut rng).unwrap();
        assert!(model.weights.dot(&model.weights).sqrt() <= 0.3 + 1e-12);
    }

    #[test]
    fn decoupled_matches_network_at_init_and_is_affine() {
        let mut rng = SeedStream::new(4).rng();
        let net = TwoLayerNet::init_standard(6, 5, Activation::Relu, &mut rng);
        let dn = decouple(&net);
        let task = ParityTask::leading(5, 3).unwrap();
        let set = WeightedSet::sample(&task, 50, &mut rng).unwrap();
        let xs = set.rows(0, 50).to_owned();
        let a = net.forward_batch(xs.view());
        let b = dn.predict_batch(xs.view());
        assert!(a.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() < 1e-12));

        let theta0 = dn.params();
        let t1: Vec<f64> = theta0.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let t2: Vec<f64> = theta0.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let mid: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| 0.5 * (a + b)).collect();
        let eval = |t: &[f64]| {
            let mut m = dn.clone();
            m.set_params(t);
            m.predict_batch(xs.view())
        };
        let (f1, f2, fm) = (eval(&t1), eval(&t2), eval(&mid));
        for s in 0..50 {
            assert!((fm[s] - 0.5 * (f1[s] + f2[s])).abs() < 1e-10);
        }
    }

    #[test]
    fn decoupled_gradient_matches_finite_differences() {
        let mut rng = SeedStream::new(6).rng();
        let net = TwoLayerNet::init_standard(4, 3, Activation::Relu, &mut rng);
        let mut dn = decouple(&net);
        let task = ParityTask::leading(3, 3).unwrap();
        let set = WeightedSet::sample(&task, 20, &mut rng).unwrap();
        let theta: Vec<f64> = dn.params().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        dn.set_params(&theta);
        let (_, g) = dn.loss_gradient(&set);
        let h = 1e-6;
        for p in 0..theta.len() {
            let mut plus = theta.clone();
            plus[p] += h;
            let mut minus = theta.clone();
            minus[p] -= h;
            let mut m = dn.clone();
            m.set_params(&plus);
            let lp = m.loss_gradient(&set).0;
            m.set_params(&minus);
            let lm = m.loss_gradient(&set).0;
            assert!(((lp - lm) / (2.0 * h) - g[p]).abs() < 1e-6, "param {p}");
        }
    }

    #[test]
    fn median_bandwidth() {
        let xs = array![[0.0], [1.0], [3.0]];
        assert_eq!(median_pairwise_distance(xs.view()).unwrap(), 2.0);
    }
}
