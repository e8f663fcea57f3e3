//! Walsh–Fourier auditing of fixed embeddings and the linear-hardness bound.
//!
//! Correlations are taken under the uniform distribution on the cube, where
//! the parities `f_S(x) = Π_{j∈S} sign(x_j)` form an orthonormal basis.
//! Subsets are encoded as bit masks and always visited in increasing mask
//! order.

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::features::FeatureMap;
use crate::parity::{WeightedSet, DEFAULT_EXACT_CAP};
use crate::rng::LabRng;

/// How a Fourier coefficient is evaluated.
pub enum FourierMode<'a> {
    Exact { cap: usize },
    MonteCarlo { samples: usize, rng: &'a mut LabRng },
}

impl FourierMode<'_> {
    pub fn exact() -> Self {
        FourierMode::Exact { cap: DEFAULT_EXACT_CAP }
    }
}

/// `±1` parity of the coordinates of `x` indexed by `subset`; `f_∅ ≡ 1`.
pub fn parity_sign(x: &[f64], subset: &[usize]) -> f64 {
    let negatives = subset.iter().filter(|&&j| x[j] < 0.0).count();
    if negatives % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `E_{x~U}[f_S(x) Ψ_i(x)]`.
pub fn fourier_correlation(map: &FeatureMap, feature: usize, subset: &[usize], mode: FourierMode<'_>) -> Result<f64> {
    let n = map.input_dim();
    if feature >= map.len() {
        return Err(invalid(format!("feature index {feature} out of range (N = {})", map.len())));
    }
    if let Some(&j) = subset.iter().find(|&&j| j >= n) {
        return Err(invalid(format!("subset index {j} out of range for n = {n}")));
    }
    let set = match mode {
        FourierMode::Exact { cap } => WeightedSet::uniform_cube(n, cap)?,
        FourierMode::MonteCarlo { samples, rng } => {
            if samples == 0 {
                return Err(invalid("Monte-Carlo sample count must be at least 1"));
            }
            let s = 1.0 / (n as f64).sqrt();
            let xs = Array2::from_shape_simple_fn((samples, n), || if rng.random_bool(0.5) { s } else { -s });
            WeightedSet::from_dense(xs, vec![1.0; samples])
        }
    };
    let mut acc = 0.0;
    set.for_each_chunk(|xs, _, ws| {
        let feats = map.embed_batch(xs);
        for ((x, f), &w) in xs.rows().into_iter().zip(feats.rows()).zip(ws) {
            acc += w * parity_sign(x.as_slice().expect("contiguous"), subset) * f[feature];
        }
    });
    Ok(acc)
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureAudit {
    pub index: usize,
    /// `Σ_S E[f_S Ψ_i]²`.
    pub sum_squared_correlations: f64,
    /// `E[Ψ_i²]`.
    pub squared_norm: f64,
    pub deviation: f64,
    /// `E[Ψ_i²] ≤ 1`, i.e. the feature respects the unit-box hypothesis.
    pub within_unit: bool,
    /// Mask of the subset with the largest correlation magnitude.
    pub top_subset: u64,
    pub top_correlation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParsevalReport {
    pub n: usize,
    pub features: Vec<FeatureAudit>,
    pub max_deviation: f64,
    pub flagged: Vec<usize>,
}

/// Parseval check for every feature: all `2^n` Walsh coefficients are
/// computed exactly and their squares summed.
pub fn parseval_audit(map: &FeatureMap, n: usize, cap: usize) -> Result<ParsevalReport> {
    if map.input_dim() != n {
        return Err(invalid(format!("map expects dimension {}, audit asked for {n}", map.input_dim())));
    }
    let cube = WeightedSet::uniform_cube(n, cap)?;
    let size = cube.len();
    // values[i][mask]
    let mut values = vec![vec![0.0; size]; map.len()];
    let mut row0 = 0;
    cube.for_each_chunk(|xs, _, _| {
        let feats = map.embed_batch(xs);
        for (r, f) in feats.rows().into_iter().enumerate() {
            for (i, &v) in f.iter().enumerate() {
                values[i][row0 + r] = v;
            }
        }
        row0 += xs.nrows();
    });
    let scale = 1.0 / size as f64;
    let mut features = Vec::with_capacity(map.len());
    for (index, mut v) in values.into_iter().enumerate() {
        let squared_norm = v.iter().map(|a| a * a).sum::<f64>() * scale;
        walsh_hadamard(&mut v);
        let mut sum = 0.0;
        let (mut top_subset, mut top_correlation) = (0u64, 0.0f64);
        for (s, c) in v.iter().enumerate() {
            let c = c * scale;
            sum += c * c;
            if c.abs() > top_correlation.abs() {
                top_subset = s as u64;
                top_correlation = c;
            }
        }
        features.push(FeatureAudit {
            index,
            sum_squared_correlations: sum,
            squared_norm,
            deviation: (sum - squared_norm).abs(),
            within_unit: squared_norm <= 1.0 + 1e-12,
            top_subset,
            top_correlation,
        });
    }
    let max_deviation = features.iter().map(|f| f.deviation).fold(0.0, f64::max);
    let flagged = features.iter().filter(|f| !f.within_unit).map(|f| f.index).collect();
    Ok(ParsevalReport { n, features, max_deviation, flagged })
}

/// In-place unnormalised Walsh–Hadamard butterfly:
/// `v[S] ← Σ_m (-1)^{|m ∧ S|} v[m]`.
fn walsh_hadamard(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Worst-case hinge loss guaranteed over the family for any linear model
/// `⟨Ψ(x), w⟩` with `Ψ ∈ [-1,1]^N` and `‖w‖₂ ≤ B`:
/// `1/2 - √N·B / (2^k·√2)`. Negative values mean the bound is vacuous.
pub fn hardness_bound(features: usize, norm_budget: f64, k: usize) -> f64 {
    0.5 - (features as f64).sqrt() * norm_budget / (2f64.powi(k as i32) * std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Serialize)]
pub struct HardnessReport {
    pub features: usize,
    pub norm_budget: f64,
    pub k: usize,
    pub n: usize,
    pub bound: f64,
    /// Whether `k ≤ n/16`, the regime in which the bound is guaranteed.
    pub hypothesis_holds: bool,
    pub warning: Option<String>,
}

pub fn hardness_report(features: usize, norm_budget: f64, k: usize, n: usize) -> HardnessReport {
    let hypothesis_holds = 16 * k <= n;
    HardnessReport {
        features,
        norm_budget,
        k,
        n,
        bound: hardness_bound(features, norm_budget, k),
        hypothesis_holds,
        warning: (!hypothesis_holds)
            .then(|| format!("k = {k} > n/16 = {}: the bound is outside its proven regime", n as f64 / 16.0)),
    }
}
