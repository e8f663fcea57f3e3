//! Fixed embeddings `Ψ : X → R^N`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, Result};
use crate::net::TwoLayerNet;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    /// `max(⟨w_i, x⟩ + b_i, 0)`.
    ReluRandom { weights: Array2<f64>, biases: Array1<f64> },
    /// `√(2/N) cos(⟨w_i, x⟩ + φ_i)`, approximating an RBF kernel.
    GaussianRff { weights: Array2<f64>, phases: Array1<f64>, bandwidth: f64 },
    /// Tangent features of a frozen network: for every neuron the gated
    /// input `u_i·gate_i(x)·x`, the gate `u_i·gate_i(x)` and the activation.
    NtkGates { net: TwoLayerNet },
    /// Arbitrary values on the cube: `table[[i, mask(x)]]`.
    ExplicitTable { n: usize, table: Array2<f64> },
}

/// A fixed feature map together with its optional `[-1, 1]` clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub kind: FeatureKind,
    pub clamp: bool,
}

impl FeatureMap {
    pub fn new(kind: FeatureKind) -> Self {
        Self { kind, clamp: false }
    }

    pub fn clamped(mut self) -> Self {
        self.clamp = true;
        self
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            FeatureKind::ReluRandom { weights, .. } | FeatureKind::GaussianRff { weights, .. } => weights.ncols(),
            FeatureKind::NtkGates { net } => net.input_dim(),
            FeatureKind::ExplicitTable { n, .. } => *n,
        }
    }

    /// Output length `N`.
    pub fn len(&self) -> usize {
        match &self.kind {
            FeatureKind::ReluRandom { weights, .. } | FeatureKind::GaussianRff { weights, .. } => weights.nrows(),
            FeatureKind::NtkGates { net } => net.width() * (net.input_dim() + 2),
            FeatureKind::ExplicitTable { table, .. } => table.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(invalid(format!("instance has length {}, map expects {}", x.len(), self.input_dim())));
        }
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        Ok(self.embed_batch(xs).row(0).to_vec())
    }

    /// Embed every row of `xs`; returns `rows × N`.
    pub fn embed_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = match &self.kind {
            FeatureKind::ReluRandom { weights, biases } => {
                let mut z = xs.dot(&weights.t());
                z += biases;
                z.mapv_inplace(|v| v.max(0.0));
                z
            }
            FeatureKind::GaussianRff { weights, phases, .. } => {
                let scale = (2.0 / weights.nrows() as f64).sqrt();
                let mut z = xs.dot(&weights.t());
                z += phases;
                z.mapv_inplace(|v| scale * v.cos());
                z
            }
            FeatureKind::NtkGates { net } => ntk_features(net, xs),
            FeatureKind::ExplicitTable { n, table } => {
                let mut out = Array2::zeros((xs.nrows(), table.nrows()));
                for (mut o, x) in out.rows_mut().into_iter().zip(xs.rows()) {
                    let mask = (0..*n).fold(0usize, |m, j| if x[j] < 0.0 { m | 1 << j } else { m });
                    o.assign(&table.column(mask));
                }
                out
            }
        };
        if self.clamp {
            out.mapv_inplace(|v| v.clamp(-1.0, 1.0));
        }
        out
    }
}

fn ntk_features(net: &TwoLayerNet, xs: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = net.input_dim();
    let block = n + 2;
    let z = net.preactivations(xs);
    let mut out = Array2::zeros((xs.nrows(), net.width() * block));
    for ((mut o, zrow), x) in out.axis_iter_mut(Axis(0)).zip(z.rows()).zip(xs.rows()) {
        for (i, &zi) in zrow.iter().enumerate() {
            let (value, gate) = net.activation.eval(zi);
            let base = i * block;
            let g = net.u[i] * gate;
            if g != 0.0 {
                for j in 0..n {
                    o[base + j] = g * x[j];
                }
                o[base + n] = g;
            }
            o[base + n + 1] = value;
        }
    }
    out
}
