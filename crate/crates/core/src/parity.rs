//! Instance space, the parity target and the mixture distribution `D_A`.
//!
//! Instances live in `{±1/√n}^n`. Whenever a point has to be enumerated it is
//! stored as a sign mask: bit `j` set means coordinate `j` is `-1/√n`. Labels
//! are always computed from sign bits, never from the floating product of the
//! coordinates (which underflows for moderate `k`).

use ndarray::{Array2, ArrayView2, CowArray, Ix2};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::LabRng;

/// Default largest `n` for which exact enumeration is attempted.
pub const DEFAULT_EXACT_CAP: usize = 22;

/// Rows materialised at a time when walking a [`WeightedSet`].
pub const CHUNK_ROWS: usize = 1024;

/// A sparse parity problem: dimension `n` and the index set `A` (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityTask {
    n: usize,
    subset: Vec<usize>,
    in_subset: Vec<bool>,
}

impl ParityTask {
    /// `subset` must hold distinct in-range indices and have odd size `k ≥ 3`.
    pub fn new(n: usize, subset: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("dimension n must be positive"));
        }
        let k = subset.len();
        if k < 3 || k % 2 == 0 {
            return Err(invalid(format!("|A| = {k} must be odd and at least 3")));
        }
        let mut in_subset = vec![false; n];
        for &j in &subset {
            if j >= n {
                return Err(invalid(format!("index {j} out of range for n = {n}")));
            }
            if in_subset[j] {
                return Err(invalid(format!("index {j} repeated in A")));
            }
            in_subset[j] = true;
        }
        Ok(Self { n, subset, in_subset })
    }

    /// `A = {0, .., k-1}`.
    pub fn leading(n: usize, k: usize) -> Result<Self> {
        Self::new(n, (0..k).collect())
    }

    /// A uniformly random `A` of size `k`.
    pub fn random(n: usize, k: usize, rng: &mut LabRng) -> Result<Self> {
        if k > n {
            return Err(invalid(format!("k = {k} exceeds n = {n}")));
        }
        let subset = rand::seq::index::sample(rng, n, k).into_vec();
        Self::new(n, subset)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.subset.len()
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn contains(&self, j: usize) -> bool {
        self.in_subset.get(j).copied().unwrap_or(false)
    }

    /// Coordinate magnitude `1/√n`.
    pub fn scale(&self) -> f64 {
        1.0 / (self.n as f64).sqrt()
    }

    /// Bit mask of `A`; only meaningful when `n ≤ 64`.
    pub fn subset_mask(&self) -> u64 {
        self.subset.iter().fold(0u64, |m, &j| m | (1u64 << j))
    }

    /// `f_A(x)`: +1 iff an even number of the coordinates in `A` are negative.
    pub fn label(&self, x: &[f64]) -> Result<i8> {
        if x.len() != self.n {
            return Err(invalid(format!("instance has length {}, expected {}", x.len(), self.n)));
        }
        let mut negatives = 0usize;
        for &j in &self.subset {
            let v = x[j];
            if v == 0.0 || !v.is_finite() {
                return Err(invalid(format!("coordinate {j} is {v}")));
            }
            if v.is_sign_negative() {
                negatives += 1;
            }
        }
        Ok(if negatives % 2 == 0 { 1 } else { -1 })
    }

    /// Label of the point encoded by a sign mask.
    pub fn label_mask(&self, mask: u64) -> i8 {
        if (mask & self.subset_mask()).count_ones() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// One draw from `D_A`.
    pub fn sample(&self, rng: &mut LabRng) -> LabeledExample {
        let s = self.scale();
        let correlated = rng.random_bool(0.5);
        let mut x: Vec<f64> = (0..self.n).map(|_| if rng.random_bool(0.5) { s } else { -s }).collect();
        if correlated {
            let v = if rng.random_bool(0.5) { s } else { -s };
            for &j in &self.subset {
                x[j] = v;
            }
        }
        let y = self.label(&x).expect("sampled instance is well formed");
        LabeledExample { x, y }
    }
}

/// An instance with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: i8,
}

/// Which part of `D_A` to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// `D_A = ½ D_A^(1) + ½ D_A^(2)`.
    FullMixture,
    /// `D_A^(1)`: uniform on the cube.
    UniformOnly,
    /// `D_A^(2)`: the coordinates in `A` all equal.
    CorrelatedOnly,
}

/// One point of an enumerated support with its probability mass.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportAtom {
    pub x: Vec<f64>,
    pub weight: f64,
    pub y: i8,
}

/// The point encoded by `mask` in dimension `n`.
pub fn instance_from_mask(mask: u64, n: usize) -> Vec<f64> {
    let s = 1.0 / (n as f64).sqrt();
    (0..n).map(|j| if mask >> j & 1 == 1 { -s } else { s }).collect()
}

/// Enumerate the support of a component of `D_A` as explicit atoms.
pub fn enumerate_support(task: &ParityTask, component: Component, cap: usize) -> Result<Vec<SupportAtom>> {
    let set = WeightedSet::exact(task, component, cap)?;
    let n = task.n();
    let Points::Masks(masks) = &set.points else { unreachable!() };
    Ok(masks
        .iter()
        .zip(&set.weights)
        .zip(&set.labels)
        .map(|((&m, &weight), &y)| SupportAtom { x: instance_from_mask(m, n), weight, y: y as i8 })
        .collect())
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap || n > 62 {
        return Err(Error::Capacity { n, cap: cap.min(62) });
    }
    Ok(())
}

fn uniform_masks(n: usize) -> impl Iterator<Item = u64> {
    0..(1u64 << n)
}

/// Masks of `D_A^(2)`: the two constant patterns on `A`, each with every
/// assignment of the free coordinates, in that order.
fn correlated_masks(task: &ParityTask) -> Vec<u64> {
    let free: Vec<usize> = (0..task.n()).filter(|&j| !task.contains(j)).collect();
    let a_mask = task.subset_mask();
    let mut out = Vec::with_capacity(2usize << free.len());
    for pattern in [0u64, a_mask] {
        for bits in 0..(1u64 << free.len()) {
            let mut m = pattern;
            for (t, &j) in free.iter().enumerate() {
                if bits >> t & 1 == 1 {
                    m |= 1 << j;
                }
            }
            out.push(m);
        }
    }
    out
}

#[derive(Debug, Clone)]
enum Points {
    Masks(Vec<u64>),
    Dense(Array2<f64>),
}

/// A finite weighted set of labelled instances: either an exact support
/// enumeration or an equally weighted Monte-Carlo sample. Every population
/// expectation in the crate is a weighted sum over one of these, walked in
/// fixed row order so results are reproducible bit for bit.
#[derive(Debug, Clone)]
pub struct WeightedSet {
    n: usize,
    points: Points,
    pub labels: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedSet {
    pub fn exact(task: &ParityTask, component: Component, cap: usize) -> Result<Self> {
        let n = task.n();
        check_cap(n, cap)?;
        let k = task.k();
        let (masks, weights): (Vec<u64>, Vec<f64>) = match component {
            Component::UniformOnly => {
                let w = 0.5f64.powi(n as i32);
                uniform_masks(n).map(|m| (m, w)).unzip()
            }
            Component::CorrelatedOnly => {
                let w = 0.5f64.powi((n - k) as i32 + 1);
                correlated_masks(task).into_iter().map(|m| (m, w)).unzip()
            }
            Component::FullMixture => {
                let wu = 0.5f64.powi(n as i32 + 1);
                let wc = 0.5f64.powi((n - k) as i32 + 2);
                uniform_masks(n)
                    .map(|m| (m, wu))
                    .chain(correlated_masks(task).into_iter().map(|m| (m, wc)))
                    .unzip()
            }
        };
        let labels = masks.iter().map(|&m| task.label_mask(m) as f64).collect();
        Ok(Self { n, points: Points::Masks(masks), labels, weights })
    }

    /// Every point of `{±1/√n}^n` with weight `2^-n`; labels are all +1.
    pub fn uniform_cube(n: usize, cap: usize) -> Result<Self> {
        check_cap(n, cap)?;
        let masks: Vec<u64> = uniform_masks(n).collect();
        let w = 0.5f64.powi(n as i32);
        let len = masks.len();
        Ok(Self { n, points: Points::Masks(masks), labels: vec![1.0; len], weights: vec![w; len] })
    }

    /// `samples` iid draws from `D_A`, each of weight `1/samples`.
    pub fn sample(task: &ParityTask, samples: usize, rng: &mut LabRng) -> Result<Self> {
        if samples == 0 {
            return Err(invalid("Monte-Carlo sample count must be at least 1"));
        }
        let n = task.n();
        let mut xs = Array2::zeros((samples, n));
        let mut labels = Vec::with_capacity(samples);
        for mut row in xs.rows_mut() {
            let ex = task.sample(rng);
            row.assign(&ndarray::ArrayView1::from(&ex.x));
            labels.push(ex.y as f64);
        }
        Ok(Self::from_dense(xs, labels))
    }

    /// Equal-weight set over explicit rows.
    pub fn from_dense(xs: Array2<f64>, labels: Vec<f64>) -> Self {
        let m = xs.nrows();
        let weights = vec![1.0 / m as f64; m];
        Self { n: xs.ncols(), points: Points::Dense(xs), labels, weights }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Rows `start..end` as a matrix.
    pub fn rows(&self, start: usize, end: usize) -> CowArray<'_, f64, Ix2> {
        match &self.points {
            Points::Dense(xs) => CowArray::from(xs.slice(ndarray::s![start..end, ..])),
            Points::Masks(masks) => {
                let s = 1.0 / (self.n as f64).sqrt();
                let mut out = Array2::from_elem((end - start, self.n), s);
                for (mut row, &m) in out.rows_mut().into_iter().zip(&masks[start..end]) {
                    for j in 0..self.n {
                        if m >> j & 1 == 1 {
                            row[j] = -s;
                        }
                    }
                }
                CowArray::from(out)
            }
        }
    }

    /// Walk the set in chunks of at most [`CHUNK_ROWS`] rows.
    pub fn for_each_chunk(&self, mut f: impl FnMut(ArrayView2<'_, f64>, &[f64], &[f64])) {
        let len = self.len();
        let mut start = 0;
        while start < len {
            let end = (start + CHUNK_ROWS).min(len);
            let xs = self.rows(start, end);
            f(xs.view(), &self.labels[start..end], &self.weights[start..end]);
            start = end;
        }
    }

    /// `Σ weight · h(x, y)` in row order.
    pub fn expectation(&self, mut h: impl FnMut(&[f64], f64) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_chunk(|xs, ys, ws| {
            for ((row, &y), &w) in xs.rows().into_iter().zip(ys).zip(ws) {
                let x = row.as_slice().expect("rows are contiguous");
                acc += w * h(x, y);
            }
        });
        acc
    }

    /// Sign masks, when the set came from exact enumeration.
    pub fn masks(&self) -> Option<&[u64]> {
        match &self.points {
            Points::Masks(m) => Some(m),
            Points::Dense(_) => None,
        }
    }
}

/// How a population expectation is evaluated.
#[derive(Debug, Clone)]
pub enum EvalMode {
    /// Enumerate the support exactly (requires `n ≤ cap`).
    Exact { cap: usize },
    /// Draw `samples` fresh instances from the stream on every evaluation.
    MonteCarlo { samples: usize, rng: LabRng },
}

impl EvalMode {
    pub fn exact() -> Self {
        EvalMode::Exact { cap: DEFAULT_EXACT_CAP }
    }

    pub fn monte_carlo(samples: usize, rng: LabRng) -> Self {
        EvalMode::MonteCarlo { samples, rng }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, EvalMode::Exact { .. })
    }

    /// The weighted set for one evaluation under `D_A`.
    pub fn draw(&mut self, task: &ParityTask) -> Result<WeightedSet> {
        match self {
            EvalMode::Exact { cap } => WeightedSet::exact(task, Component::FullMixture, *cap),
            EvalMode::MonteCarlo { samples, rng } => WeightedSet::sample(task, *samples, rng),
        }
    }
}
