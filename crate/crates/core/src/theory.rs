//! Executable versions of the first-step lemmas: exact gradient cancellation
//! on the correlated component, uniform-gradient concentration, the
//! anti-concentration window `φ(w, b)`, first-step neuron geometry, the
//! ramp-staircase identity, the explicit separator `u*`, and the drift and
//! loss-Lipschitz bounds along a training run.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::net::{hinge, relu6, TwoLayerNet};
use crate::parity::{Component, ParityTask, WeightedSet, DEFAULT_EXACT_CAP};
use crate::rng::LabRng;
use crate::train::drift;

/// Which derivative stands in for `σ'` in the gradient expectations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GateConvention {
    /// `1` on the open region `0 < z < 6`.
    Relu6,
    /// `1` whenever `z > 0`, ignoring the cap.
    Indicator,
}

impl GateConvention {
    pub fn gate(self, z: f64) -> bool {
        match self {
            GateConvention::Relu6 => relu6(z).1 == 1,
            GateConvention::Indicator => z > 0.0,
        }
    }
}

fn check_ternary(w: &[i8], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(invalid(format!("weight vector has length {}, expected {n}", w.len())));
    }
    if w.iter().any(|v| !(-1..=1).contains(v)) {
        return Err(invalid("weights must lie in {-1, 0, 1}"));
    }
    Ok(())
}

/// Gate-weighted parity moments of one neuron on a weighted mask set.
/// Preactivations use the integer sum `Σ w_j s_j` so mirrored patterns
/// produce bit-identical arguments.
struct Moments {
    /// `E[x_j f(x) σ'(z)]` for every `j`.
    coord: Vec<f64>,
    /// `E[f(x) σ'(z)]`.
    bias: f64,
}

fn gate_moments(w: &[i8], b: f64, task: &ParityTask, set: &WeightedSet, convention: GateConvention) -> Moments {
    let n = task.n();
    let scale = task.scale();
    let masks = set.masks().expect("enumerated set");
    let mut coord = vec![0.0; n];
    let mut bias = 0.0;
    // Group by weight so that cancellation happens in integer arithmetic.
    let mut groups: BTreeMap<u64, (f64, Vec<i64>, i64)> = BTreeMap::new();
    for (idx, &m) in masks.iter().enumerate() {
        let mut dot = 0i64;
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0 {
                dot += if m >> j & 1 == 1 { -(wj as i64) } else { wj as i64 };
            }
        }
        let z = dot as f64 * scale + b;
        if !convention.gate(z) {
            continue;
        }
        let y = task.label_mask(m) as i64;
        let weight = set.weights[idx];
        let entry = groups.entry(weight.to_bits()).or_insert_with(|| (weight, vec![0; n], 0));
        for j in 0..n {
            let s = if m >> j & 1 == 1 { -1 } else { 1 };
            entry.1[j] += s * y;
        }
        entry.2 += y;
    }
    for (weight, counts, ysum) in groups.into_values() {
        for j in 0..n {
            coord[j] += counts[j] as f64 * weight * scale;
        }
        bias += ysum as f64 * weight;
    }
    Moments { coord, bias }
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroGradientReport {
    pub convention: GateConvention,
    /// `max_{j ∉ A} |E_{D2}[x_j f σ'(⟨w,x⟩+b)]|`.
    pub max_abs_off_a: f64,
    /// `|E_{D2}[f σ'(⟨w,x⟩+b)]|`.
    pub abs_bias_term: f64,
}

impl ZeroGradientReport {
    pub fn is_zero(&self, tol: f64) -> bool {
        self.max_abs_off_a <= tol && self.abs_bias_term <= tol
    }
}

/// Off-subset and bias gradient moments on the correlated component, without
/// checking the `Σ_A w = 0` precondition.
pub fn correlated_moments(w: &[i8], b: f64, task: &ParityTask, convention: GateConvention) -> Result<ZeroGradientReport> {
    check_ternary(w, task.n())?;
    let set = WeightedSet::exact(task, Component::CorrelatedOnly, DEFAULT_EXACT_CAP)?;
    let m = gate_moments(w, b, task, &set, convention);
    let max_abs_off_a = (0..task.n()).filter(|&j| !task.contains(j)).map(|j| m.coord[j].abs()).fold(0.0, f64::max);
    Ok(ZeroGradientReport { convention, max_abs_off_a, abs_bias_term: m.bias.abs() })
}

/// Both moments must vanish exactly when `Σ_{j∈A} w_j = 0`.
pub fn zero_gradient_check(w: &[i8], b: f64, task: &ParityTask, convention: GateConvention) -> Result<ZeroGradientReport> {
    check_ternary(w, task.n())?;
    let sum_a: i32 = task.subset().iter().map(|&j| w[j] as i32).sum();
    if sum_a != 0 {
        return Err(invalid(format!("Σ_A w = {sum_a}, expected 0")));
    }
    correlated_moments(w, b, task, convention)
}

#[derive(Debug, Clone, Serialize)]
pub struct TailSummary {
    pub median: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
    /// Fraction of trials strictly above the threshold.
    pub exceed_fraction: f64,
}

impl TailSummary {
    fn from(mut values: Vec<f64>, threshold: f64) -> Self {
        values.sort_by(f64::total_cmp);
        let q = |p: f64| values[((values.len() - 1) as f64 * p).round() as usize];
        let exceed = values.iter().filter(|&&v| v > threshold).count();
        Self {
            median: q(0.5),
            q90: q(0.9),
            q99: q(0.99),
            max: *values.last().expect("at least one trial"),
            exceed_fraction: exceed as f64 / values.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformGradientReport {
    pub n: usize,
    pub k: usize,
    pub coordinate: usize,
    pub trials: usize,
    pub c: f64,
    /// `c / √binom(n-1, k)`.
    pub threshold: f64,
    pub coordinate_term: TailSummary,
    pub bias_term: TailSummary,
    /// `1/c`, the exceedance rate permitted by Markov's inequality.
    pub allowed_fraction: f64,
}

/// Exact uniform-distribution moments `|E[x_j f σ'(⟨w,x⟩+b)]|` and
/// `|E[f σ'(⟨w,x⟩+b)]|` over `trials` fresh draws of `w ~ U({-1,0,1}^n)`.
pub fn uniform_gradient_stat(
    task: &ParityTask,
    coordinate: usize,
    b: f64,
    trials: usize,
    c: f64,
    convention: GateConvention,
    rng: &mut LabRng,
) -> Result<UniformGradientReport> {
    let (n, k) = (task.n(), task.k());
    if coordinate >= n || task.contains(coordinate) {
        return Err(invalid(format!("coordinate {coordinate} must be outside the subset and below n = {n}")));
    }
    if trials == 0 || !(c > 0.0) {
        return Err(invalid("trials and c must be positive"));
    }
    let set = WeightedSet::uniform_cube(n, DEFAULT_EXACT_CAP)?;
    let mut coord_vals = Vec::with_capacity(trials);
    let mut bias_vals = Vec::with_capacity(trials);
    for _ in 0..trials {
        let w: Vec<i8> = (0..n).map(|_| rng.random_range(-1..=1)).collect();
        let m = gate_moments(&w, b, task, &set, convention);
        coord_vals.push(m.coord[coordinate].abs());
        bias_vals.push(m.bias.abs());
    }
    let threshold = c / binomial(n - 1, k).sqrt();
    Ok(UniformGradientReport {
        n,
        k,
        coordinate,
        trials,
        c,
        threshold,
        coordinate_term: TailSummary::from(coord_vals, threshold),
        bias_term: TailSummary::from(bias_vals, threshold),
        allowed_fraction: 1.0 / c,
    })
}

/// `binom(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// How `φ(w, b)` is evaluated.
pub enum VarphiMode<'a> {
    /// Exact law of the off-subset sum by repeated convolution.
    Exact,
    MonteCarlo { samples: usize, rng: &'a mut LabRng },
}

/// Window-membership tolerance of the exact backend.
pub const WINDOW_GUARD: f64 = 1e-12;

/// `P(k/√n < Σ_{j∈J} w_j x_j + b < 6 - k/√n)` for `x` uniform, where
/// `J = {j ∉ A : w_j ≠ 0}`.
pub fn varphi(w: &[i8], b: f64, task: &ParityTask, mode: VarphiMode<'_>) -> Result<f64> {
    check_ternary(w, task.n())?;
    let scale = task.scale();
    let margin = task.k() as f64 * scale;
    let (lo, hi) = (margin, 6.0 - margin);
    let support: Vec<i8> = (0..task.n()).filter(|&j| !task.contains(j) && w[j] != 0).map(|j| w[j]).collect();
    match mode {
        VarphiMode::Exact => {
            // Σ w_j x_j has the law of (2m - |J|)/√n with m ~ Bin(|J|, 1/2).
            let size = support.len();
            let mut pmf = vec![1.0];
            for _ in 0..size {
                let mut next = vec![0.0; pmf.len() + 1];
                for (m, p) in pmf.iter().enumerate() {
                    next[m] += 0.5 * p;
                    next[m + 1] += 0.5 * p;
                }
                pmf = next;
            }
            let mut total = 0.0;
            for (m, p) in pmf.iter().enumerate() {
                let v = (2 * m as i64 - size as i64) as f64 * scale + b;
                if v - lo > WINDOW_GUARD && hi - v > WINDOW_GUARD {
                    total += p;
                }
            }
            Ok(total)
        }
        VarphiMode::MonteCarlo { samples, rng } => {
            if samples == 0 {
                return Err(invalid("Monte-Carlo sample count must be at least 1"));
            }
            let mut hits = 0usize;
            for _ in 0..samples {
                let s: i64 = support.iter().map(|&wj| if rng.random_bool(0.5) { wj as i64 } else { -(wj as i64) }).sum();
                let v = s as f64 * scale + b;
                if v > lo && v < hi {
                    hits += 1;
                }
            }
            Ok(hits as f64 / samples as f64)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NeuronDiagnostics {
    pub index: usize,
    pub sum_wa: i32,
    pub j_size: usize,
    /// `φ(w^(0), b^(0))`.
    pub alpha: f64,
    /// `max_{j∈A} |w_j^(1) - α u^(0)/√n|`.
    pub drift_on_a: f64,
    /// `max_{j∉A} |w_j^(1)|`.
    pub drift_off_a: f64,
    /// `|b^(1) - b^(0)|`.
    pub bias_drift: f64,
    /// Uniform-component moments recovered from the step (`NaN` unless
    /// `Σ_A w = 0`, where the correlated part vanishes).
    pub uniform_coord_max: f64,
    pub uniform_bias: f64,
    pub concentrated: bool,
    pub is_good: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstStepSummary {
    pub neurons: usize,
    pub sum_zero_fraction: f64,
    pub sum_zero_std_error: f64,
    pub good_fraction: f64,
    pub good_std_error: f64,
    /// `1/(14√k)`.
    pub good_fraction_floor: f64,
    /// `14√k (n-1) / √binom(n-1, k)`.
    pub concentration_threshold: f64,
    /// `max drift_on_a` over good neurons.
    pub c1: f64,
    /// `(n-1) · max drift_off_a` over good neurons.
    pub c2_scaled: f64,
    /// `√n · max bias_drift` over good neurons.
    pub c3_scaled: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstStepReport {
    pub neurons: Vec<NeuronDiagnostics>,
    pub summary: FirstStepSummary,
}

/// Classify the first `q` neurons of `net0`, given `net1` produced from it
/// by one exact step with `η = 1, λ = 1/2`. For such a step
/// `w^(1) = u^(0) E_D[y x σ']` and `b^(1) - b^(0) = u^(0) E_D[y σ']`, which
/// lets the uniform-component moments of good neurons be read off `net1`.
pub fn first_step_diagnostics(net0: &TwoLayerNet, net1: &TwoLayerNet, task: &ParityTask) -> Result<FirstStepReport> {
    let (n, k) = (task.n(), task.k());
    if net0.input_dim() != n || net1.input_dim() != n || net0.width() != net1.width() {
        return Err(invalid("networks and task disagree in shape"));
    }
    let q = net0.q();
    let sqrt_n = (n as f64).sqrt();
    let threshold = 14.0 * (k as f64).sqrt() * (n - 1) as f64 / binomial(n - 1, k).sqrt();
    let mut neurons = Vec::with_capacity(q);
    for i in 0..q {
        let row = net0.w.row(i);
        let w: Vec<i8> = row.iter().map(|&v| v as i8).collect();
        if row.iter().zip(&w).any(|(&a, &b)| a != b as f64) {
            return Err(invalid(format!("neuron {i} of net0 is not ternary")));
        }
        let sum_wa: i32 = task.subset().iter().map(|&j| w[j] as i32).sum();
        let j_size = (0..n).filter(|&j| !task.contains(j) && w[j] != 0).count();
        let alpha = varphi(&w, net0.b[i], task, VarphiMode::Exact)?;
        let u0 = net0.u[i];
        let target = alpha * u0 / sqrt_n;
        let drift_on_a = task.subset().iter().map(|&j| (net1.w[[i, j]] - target).abs()).fold(0.0, f64::max);
        let drift_off_a = (0..n).filter(|&j| !task.contains(j)).map(|j| net1.w[[i, j]].abs()).fold(0.0, f64::max);
        let bias_drift = (net1.b[i] - net0.b[i]).abs();
        let (uniform_coord_max, uniform_bias) = if sum_wa == 0 && u0 != 0.0 {
            (2.0 * drift_off_a / u0.abs(), 2.0 * bias_drift / u0.abs())
        } else {
            (f64::NAN, f64::NAN)
        };
        let concentrated = uniform_coord_max <= threshold && uniform_bias <= threshold;
        let is_good = sum_wa == 0 && 3 * j_size >= n - k && concentrated;
        neurons.push(NeuronDiagnostics {
            index: i,
            sum_wa,
            j_size,
            alpha,
            drift_on_a,
            drift_off_a,
            bias_drift,
            uniform_coord_max,
            uniform_bias,
            concentrated,
            is_good,
        });
    }
    let qf = q as f64;
    let rate = |c: usize| c as f64 / qf;
    let se = |p: f64| (p * (1.0 - p) / qf).sqrt();
    let sum_zero = rate(neurons.iter().filter(|d| d.sum_wa == 0).count());
    let good = rate(neurons.iter().filter(|d| d.is_good).count());
    let good_max = |f: fn(&NeuronDiagnostics) -> f64| neurons.iter().filter(|d| d.is_good).map(f).fold(0.0, f64::max);
    let alphas = neurons.iter().filter(|d| d.is_good).map(|d| d.alpha);
    let summary = FirstStepSummary {
        neurons: q,
        sum_zero_fraction: sum_zero,
        sum_zero_std_error: se(sum_zero),
        good_fraction: good,
        good_std_error: se(good),
        good_fraction_floor: 1.0 / (14.0 * (k as f64).sqrt()),
        concentration_threshold: threshold,
        c1: good_max(|d| d.drift_on_a),
        c2_scaled: (n - 1) as f64 * good_max(|d| d.drift_off_a),
        c3_scaled: sqrt_n * good_max(|d| d.bias_drift),
        alpha_min: alphas.clone().fold(f64::INFINITY, f64::min),
        alpha_max: alphas.fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(FirstStepReport { neurons, summary })
}

/// Probability that `k` iid uniform draws from `{-1,0,1}` sum to zero.
pub fn ternary_zero_sum_probability(k: usize) -> f64 {
    // Σ_m binom(k, m) binom(k-m, (k-m)/2) over m zeros with k-m even.
    let mut count = 0.0;
    for zeros in 0..=k {
        let rest = k - zeros;
        if rest % 2 == 0 {
            count += binomial(k, zeros) * binomial(rest, rest / 2);
        }
    }
    count / 3f64.powi(k as i32)
}

/// The ramp `relu(|r| - sign(r)·z)`, or its ReLU6 cap when `capped`.
pub fn ramp(r: i32, z: f64, capped: bool) -> f64 {
    let arg = r.abs() as f64 - (r.signum() as f64) * z;
    if capped {
        relu6(arg).0
    } else {
        arg.max(0.0)
    }
}

/// `v_r` as written: 1 at `|r| = k`, 2.5 at `|r| = 1`, 2 otherwise.
pub fn written_coefficient(r: i32, k: i32) -> f64 {
    if r.abs() == k {
        1.0
    } else if r.abs() == 1 {
        2.5
    } else {
        2.0
    }
}

/// Coefficient `c_r` making `Σ_r c_r relu(|r| - sign(r) z) = (-1)^((k-z)/2)`
/// hold at every grid point `z`: `c_r = (-1)^((k+r)/2) m_r` with `m_r = 2`
/// inside and `m_{±k} = 1.5` for `k ≡ 3 (mod 4)`, `0.5` for `k ≡ 1 (mod 4)`.
pub fn exact_coefficient(r: i32, k: i32) -> f64 {
    let magnitude = if r.abs() == k {
        if k % 4 == 3 {
            1.5
        } else {
            0.5
        }
    } else {
        2.0
    };
    if ((k + r) / 2) % 2 == 0 {
        magnitude
    } else {
        -magnitude
    }
}

fn parity_of_grid(z: i32, k: i32) -> f64 {
    if ((k - z) / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StaircaseReport {
    pub k: usize,
    pub grid: Vec<i32>,
    pub coefficients: Vec<f64>,
    pub signs: Vec<f64>,
    /// Error of `Σ_r (-1)^((k-r)/2) v_r φ_r(z)` with ReLU6 ramps.
    pub identity_max_error: f64,
    /// The same combination with uncapped ramps.
    pub uncapped_max_error: f64,
    /// Largest ramp argument `|r| + |z|` on the grid.
    pub max_argument: i32,
    pub cap_binds: bool,
    /// Coefficients `c_r` that represent the parity exactly with uncapped ramps.
    pub exact_coefficients: Vec<f64>,
    pub exact_max_error: f64,
}

pub fn staircase(k: usize) -> Result<StaircaseReport> {
    if k % 2 == 0 || k == 0 {
        return Err(invalid(format!("k = {k} must be odd")));
    }
    let ki = k as i32;
    let grid: Vec<i32> = (-ki..=ki).step_by(2).collect();
    let coefficients: Vec<f64> = grid.iter().map(|&r| written_coefficient(r, ki)).collect();
    let signs: Vec<f64> = grid.iter().map(|&r| parity_of_grid(r, ki)).collect();
    let exact_coefficients: Vec<f64> = grid.iter().map(|&r| exact_coefficient(r, ki)).collect();
    let combo = |coef: &dyn Fn(usize) -> f64, capped: bool| {
        grid.iter()
            .map(|&z| {
                let s: f64 = grid.iter().enumerate().map(|(i, &r)| coef(i) * ramp(r, z as f64, capped)).sum();
                (s - parity_of_grid(z, ki)).abs()
            })
            .fold(0.0, f64::max)
    };
    let written = |i: usize| signs[i] * coefficients[i];
    Ok(StaircaseReport {
        k,
        identity_max_error: combo(&written, true),
        uncapped_max_error: combo(&written, false),
        max_argument: 2 * ki,
        cap_binds: 2 * ki > 6,
        exact_max_error: combo(&|i| exact_coefficients[i], false),
        grid,
        coefficients,
        signs,
        exact_coefficients,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparatorCertificate {
    pub u_star: Vec<f64>,
    /// `min_x g*(x) f_A(x)` over the evaluation set.
    pub margin: f64,
    pub l2_norm: f64,
    pub l0_norm: usize,
    /// Neuron index to ramp offset `r`.
    pub bucket_assignment: BTreeMap<usize, i32>,
    pub bucket_sizes: BTreeMap<i32, usize>,
    pub epsilon: f64,
    /// Largest matching error `sup_z |ψ̂_i - ψ_r|` among assigned neurons.
    pub max_match_error: f64,
    /// Every point of the evaluation set has `g*(x) f_A(x) > 0`.
    pub classifies_all: bool,
    /// Whether the margin was taken over the full support.
    pub exact_support: bool,
}

impl SeparatorCertificate {
    /// `u*` rescaled to margin 1 (identity when the margin is not positive).
    pub fn normalized(&self) -> Vec<f64> {
        if self.margin > 0.0 {
            self.u_star.iter().map(|v| v / self.margin).collect()
        } else {
            self.u_star.clone()
        }
    }
}

/// Build `u*` from a post-first-step network. Each of the first `q` neurons
/// is rescaled to `ψ̂_i = (|r| / b^(0)) σ(⟨w_i^(1), x⟩ + b_i^(1))` with
/// `b^(0) = 1/(8k)` and compared against the ramp `ψ_r(z) = relu(|r| - sign(r) z)`
/// over every sign pattern of the subset coordinates (others held at 0). A
/// neuron joins the bucket of its best ramp when that error is at most
/// `epsilon`; bucket `r` then receives weights `c_r |r| / (|I_r| b^(0))`.
/// The margin is measured on the enumerated support when `n ≤ cap`, and on
/// `eval` otherwise.
pub fn build_separator(
    net1: &TwoLayerNet,
    task: &ParityTask,
    epsilon: f64,
    min_per_bucket: usize,
    eval: Option<&WeightedSet>,
) -> Result<SeparatorCertificate> {
    let (n, k) = (task.n(), task.k());
    if net1.input_dim() != n {
        return Err(invalid("network and task disagree in dimension"));
    }
    let ki = k as i32;
    let b0 = 1.0 / (8.0 * k as f64);
    let grid: Vec<i32> = (-ki..=ki).step_by(2).collect();
    // Subset sign patterns and their sums z = √n Σ_{j∈A} x_j.
    let patterns: Vec<(Vec<f64>, f64)> = (0..1u32 << k)
        .map(|p| {
            let signs: Vec<f64> = (0..k).map(|t| if p >> t & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let z = signs.iter().sum();
            (signs, z)
        })
        .collect();
    let scale = task.scale();
    let mut assignment = BTreeMap::new();
    let mut buckets: BTreeMap<i32, Vec<usize>> = grid.iter().map(|&r| (r, Vec::new())).collect();
    let mut max_match_error: f64 = 0.0;
    for i in 0..net1.q() {
        let acts: Vec<(f64, f64)> = patterns
            .iter()
            .map(|(signs, z)| {
                let pre: f64 = task.subset().iter().zip(signs).map(|(&j, s)| net1.w[[i, j]] * s * scale).sum::<f64>() + net1.b[i];
                (net1.activation.eval(pre).0, *z)
            })
            .collect();
        let mut best: Option<(i32, f64)> = None;
        for &r in &grid {
            let factor = r.abs() as f64 / b0;
            let err = acts.iter().map(|&(a, z)| (factor * a - ramp(r, z, false)).abs()).fold(0.0, f64::max);
            if best.is_none_or(|(_, e)| err < e) {
                best = Some((r, err));
            }
        }
        let (r, err) = best.expect("non-empty grid");
        if err <= epsilon {
            assignment.insert(i, r);
            buckets.get_mut(&r).expect("grid bucket").push(i);
            max_match_error = max_match_error.max(err);
        }
    }
    if let Some((&r, _)) = buckets.iter().find(|(_, v)| v.len() < min_per_bucket.max(1)) {
        return Err(Error::SeparatorInfeasible { r });
    }
    let mut u_star = vec![0.0; net1.width()];
    for (&r, members) in &buckets {
        let weight = exact_coefficient(r, ki) * r.abs() as f64 / (members.len() as f64 * b0);
        for &i in members {
            u_star[i] = weight;
        }
    }
    let owned;
    let (set, exact_support) = match eval {
        Some(s) if n > DEFAULT_EXACT_CAP => (s, false),
        _ => {
            owned = WeightedSet::exact(task, Component::FullMixture, DEFAULT_EXACT_CAP)?;
            (&owned, true)
        }
    };
    let mut probe = net1.clone();
    probe.u = Array1::from(u_star.clone());
    let mut margin = f64::INFINITY;
    set.for_each_chunk(|xs, ys, _| {
        let out = probe.forward_batch(xs);
        for (o, y) in out.iter().zip(ys) {
            margin = margin.min(o * y);
        }
    });
    let l2_norm = u_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    let l0_norm = u_star.iter().filter(|v| **v != 0.0).count();
    Ok(SeparatorCertificate {
        u_star,
        margin,
        l2_norm,
        l0_norm,
        bucket_assignment: assignment,
        bucket_sizes: buckets.iter().map(|(&r, v)| (r, v.len())).collect(),
        epsilon,
        max_match_error,
        classifies_all: margin > 0.0,
        exact_support,
    })
}

/// Right-hand sides of the drift bounds at snapshot `t` under a constant
/// tail step `η` and strength `λ`: `(‖w^(t) - w^(1)‖, |b^(t) - b^(1)|)`.
pub fn drift_bounds(t: usize, eta: f64, lambda: f64, k: usize, n: usize) -> (f64, f64) {
    let t = t as f64;
    let (kf, nf) = (k as f64, n as f64);
    let common = 6.0 * eta * eta * t * t + eta * t * kf / nf.sqrt();
    (2.0 * eta * t * lambda * nf / kf + common, common)
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftRow {
    pub step: usize,
    pub w_drift: f64,
    pub w_bound: f64,
    pub b_drift: f64,
    pub b_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub rows: Vec<DriftRow>,
    pub min_w_slack: f64,
    pub min_b_slack: f64,
    pub holds: bool,
}

/// Compare recorded drifts of snapshots `t ≥ 2` against [`drift_bounds`].
pub fn weight_drift_check(snapshots: &[TwoLayerNet], eta: f64, lambda: f64, k: usize, n: usize) -> Result<DriftReport> {
    if snapshots.len() < 2 {
        return Err(Error::MissingSnapshots("need g^(0) and g^(1) at least".into()));
    }
    let rows: Vec<DriftRow> = snapshots
        .iter()
        .enumerate()
        .skip(2)
        .map(|(t, net)| {
            let (w_drift, b_drift) = drift(net, &snapshots[1]);
            let (w_bound, b_bound) = drift_bounds(t, eta, lambda, k, n);
            DriftRow { step: t, w_drift, w_bound, b_drift, b_bound }
        })
        .collect();
    let min_w_slack = rows.iter().map(|r| r.w_bound - r.w_drift).fold(f64::INFINITY, f64::min);
    let min_b_slack = rows.iter().map(|r| r.b_bound - r.b_drift).fold(f64::INFINITY, f64::min);
    Ok(DriftReport { holds: min_w_slack >= 0.0 && min_b_slack >= 0.0, rows, min_w_slack, min_b_slack })
}

#[derive(Debug, Clone, Serialize)]
pub struct LossLipRow {
    pub step: usize,
    /// `max_x |ℓ(g_t^{u*}(x), y) - ℓ(g_1^{u*}(x), y)|`.
    pub measured: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LossLipReport {
    pub rows: Vec<LossLipRow>,
    pub min_slack: f64,
    pub holds: bool,
}

/// `2‖u*‖₂ √‖u*‖₀ (6η²t² + ηt k/√n + ηtλ n/k)`.
pub fn loss_lip_bound(u_star: &[f64], t: usize, eta: f64, lambda: f64, k: usize, n: usize) -> f64 {
    let l2 = u_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    let l0 = u_star.iter().filter(|v| **v != 0.0).count() as f64;
    let (tf, kf, nf) = (t as f64, k as f64, n as f64);
    2.0 * l2 * l0.sqrt() * (6.0 * eta * eta * tf * tf + eta * tf * kf / nf.sqrt() + eta * tf * lambda * nf / kf)
}

/// Replay `u*` on the first layer of every snapshot `t ≥ 1` and compare the
/// pointwise hinge-loss change against [`loss_lip_bound`] over `set`.
pub fn loss_lip_check(
    snapshots: &[TwoLayerNet],
    u_star: &[f64],
    eta: f64,
    lambda: f64,
    task: &ParityTask,
    set: &WeightedSet,
) -> Result<LossLipReport> {
    if snapshots.len() < 2 {
        return Err(Error::MissingSnapshots("need g^(0) and g^(1) at least".into()));
    }
    if u_star.len() != snapshots[0].width() {
        return Err(invalid("u* length differs from the network width"));
    }
    let losses = |net: &TwoLayerNet| -> Vec<f64> {
        let mut probe = net.clone();
        probe.u = Array1::from(u_star.to_vec());
        let mut out = Vec::with_capacity(set.len());
        set.for_each_chunk(|xs, ys, _| {
            let g = probe.forward_batch(xs);
            out.extend(g.iter().zip(ys).map(|(o, y)| hinge(*y, *o).0));
        });
        out
    };
    let base = losses(&snapshots[1]);
    let rows: Vec<LossLipRow> = snapshots
        .iter()
        .enumerate()
        .skip(1)
        .map(|(t, net)| {
            let measured = losses(net).iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            LossLipRow { step: t, measured, bound: loss_lip_bound(u_star, t, eta, lambda, task.k(), task.n()) }
        })
        .collect();
    let min_slack = rows.iter().map(|r| r.bound - r.measured).fold(f64::INFINITY, f64::min);
    Ok(LossLipReport { holds: min_slack >= 0.0, rows, min_slack })
}

/// `(n, k)`-table of the staircase over odd `k` in `3..=13`.
pub fn staircase_table() -> Vec<StaircaseReport> {
    (3..=13).step_by(2).map(|k| staircase(k).expect("odd k")).collect()
}

/// `(k+1) × (k+1)` matrix of uncapped ramps, rows indexed by `z`, columns by `r`, for callers
/// solving for coefficients independently.
pub fn ramp_matrix(k: usize) -> Array2<f64> {
    let ki = k as i32;
    let grid: Vec<i32> = (-ki..=ki).step_by(2).collect();
    Array2::from_shape_fn((grid.len(), grid.len()), |(zi, ri)| ramp(grid[ri], grid[zi] as f64, false))
}
