//! The two-layer network `g(x) = Σ_i u_i σ(⟨w_i, x⟩ + b_i)`, its symmetric
//! initialisation, the hinge loss, the regulariser and hand-derived
//! population gradients.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::parity::{EvalMode, ParityTask, WeightedSet};
use crate::rng::{LabRng, SeedStream};

/// `min(max(z, 0), 6)` and its gate. The gate is 1 only on the open linear
/// region `0 < z < 6`; both kinks get 0.
pub fn relu6(z: f64) -> (f64, u8) {
    let value = z.clamp(0.0, 6.0);
    let gate = u8::from(z > 0.0 && z < 6.0);
    (value, gate)
}

/// Hinge loss `max(1 - y·ŷ, 0)` and its subgradient in `ŷ` (0 on the margin).
pub fn hinge(y: f64, yhat: f64) -> (f64, f64) {
    let margin = 1.0 - y * yhat;
    if margin > 0.0 {
        (margin, -y)
    } else {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu6,
    Relu,
}

impl Activation {
    /// `(σ(z), σ'(z))`, with the derivative taken as the gate.
    #[inline]
    pub fn eval(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Relu6 => {
                let (v, g) = relu6(z);
                (v, g as f64)
            }
            Activation::Relu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }
}

/// Weights of a one-hidden-layer network. Row `i` of `w` is `w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerNet {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub u: Array1<f64>,
    pub activation: Activation,
}

impl TwoLayerNet {
    pub fn new(w: Array2<f64>, b: Array1<f64>, u: Array1<f64>, activation: Activation) -> Result<Self> {
        if b.len() != w.nrows() || u.len() != w.nrows() {
            return Err(invalid(format!(
                "shape mismatch: w is {:?}, b has {}, u has {}",
                w.dim(),
                b.len(),
                u.len()
            )));
        }
        let net = Self { w, b, u, activation };
        if !net.is_finite() {
            return Err(Error::Numeric("network parameters".into()));
        }
        Ok(net)
    }

    pub fn zeros(width: usize, n: usize, activation: Activation) -> Self {
        Self {
            w: Array2::zeros((width, n)),
            b: Array1::zeros(width),
            u: Array1::zeros(width),
            activation,
        }
    }

    /// Symmetric ReLU6 initialisation with `2q` neurons: for `i < q`,
    /// `w_i ~ U({-1,0,1}^n)`, `b_i = 1/(8k)`, `u_i ~ U[-n/k, n/k]`. Neuron
    /// `q + i` copies `(w_i, b_i)` and carries `-u_i`, so the pair cancels and
    /// the initial network is identically zero. Neuron `i` draws only from
    /// substream `i` of `stream`, so growing `q` leaves earlier neurons intact.
    pub fn init_symmetric(q: usize, n: usize, k: usize, stream: SeedStream) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(invalid("q and n must be positive"));
        }
        if k < 3 || k % 2 == 0 {
            return Err(invalid(format!("k = {k} must be odd and at least 3")));
        }
        let mut net = Self::zeros(2 * q, n, Activation::Relu6);
        let bias = 1.0 / (8.0 * k as f64);
        let u_max = n as f64 / k as f64;
        for i in 0..q {
            let mut rng = stream.substream(i as u64).rng();
            for j in 0..n {
                let v = rng.random_range(0..3) as f64 - 1.0;
                net.w[[i, j]] = v;
                net.w[[q + i, j]] = v;
            }
            let u = rng.random_range(-u_max..=u_max);
            net.b[i] = bias;
            net.b[q + i] = bias;
            net.u[i] = u;
            net.u[q + i] = -u;
        }
        Ok(net)
    }

    /// Conventional random initialisation: `w ~ N(0, 1/n)`, `b = 0`,
    /// `u ~ N(0, 1/width)`.
    pub fn init_standard(width: usize, n: usize, activation: Activation, rng: &mut LabRng) -> Self {
        let wdist = Normal::new(0.0, 1.0 / (n as f64).sqrt()).expect("positive std");
        let udist = Normal::new(0.0, 1.0 / (width as f64).sqrt()).expect("positive std");
        let w = Array2::from_shape_simple_fn((width, n), || wdist.sample(rng));
        let u = Array1::from_shape_simple_fn(width, || udist.sample(rng));
        Self { w, b: Array1::zeros(width), u, activation }
    }

    pub fn width(&self) -> usize {
        self.w.nrows()
    }

    /// Half-width `q` of a symmetric network.
    pub fn q(&self) -> usize {
        self.width() / 2
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).chain(self.u.iter()).all(|v| v.is_finite())
    }

    /// `⟨w_i, x⟩ + b_i` for every row of `xs`: `rows × width`.
    pub fn preactivations(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = xs.dot(&self.w.t());
        z += &self.b;
        z
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(invalid(format!("instance has length {}, network expects {}", x.len(), self.input_dim())));
        }
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        Ok(self.forward_batch(xs)[0])
    }

    pub fn forward_batch(&self, xs: ArrayView2<'_, f64>) -> Array1<f64> {
        let mut z = self.preactivations(xs);
        let act = self.activation;
        z.mapv_inplace(|v| act.eval(v).0);
        paired_output(&z, &self.u)
    }

    /// Apply `θ ← θ - η·(grad + λ·∇R)`; biases only see `grad`.
    pub fn apply_step(&mut self, grad: &GradientBundle, eta: f64, lambda: f64) {
        let shrink = 2.0 * lambda;
        Zip::from(&mut self.w).and(&grad.dw).for_each(|w, &g| *w -= eta * (g + shrink * *w));
        Zip::from(&mut self.u).and(&grad.du).for_each(|u, &g| *u -= eta * (g + shrink * *u));
        Zip::from(&mut self.b).and(&grad.db).for_each(|b, &g| *b -= eta * g);
    }

    /// Write the flat binary snapshot (see [`SNAPSHOT_MAGIC`]).
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(SNAPSHOT_MAGIC)?;
        out.write_all(&[match self.activation {
            Activation::Relu6 => 0u8,
            Activation::Relu => 1u8,
        }])?;
        out.write_all(&(self.width() as u32).to_le_bytes())?;
        out.write_all(&(self.input_dim() as u32).to_le_bytes())?;
        for v in self.w.iter().chain(self.b.iter()).chain(self.u.iter()) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 13];
        input.read_exact(&mut header)?;
        if &header[..4] != SNAPSHOT_MAGIC {
            return Err(invalid("bad snapshot magic"));
        }
        let activation = match header[4] {
            0 => Activation::Relu6,
            1 => Activation::Relu,
            other => return Err(invalid(format!("unknown activation tag {other}"))),
        };
        let width = u32::from_le_bytes(header[5..9].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(header[9..13].try_into().unwrap()) as usize;
        let count = width
            .checked_mul(n)
            .and_then(|v| v.checked_add(2 * width))
            .ok_or_else(|| invalid("snapshot dimensions overflow"))?;
        let mut values = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            input.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        let u = Array1::from(values.split_off(width * n + width));
        let b = Array1::from(values.split_off(width * n));
        let w = Array2::from_shape_vec((width, n), values).expect("length checked");
        Self::new(w, b, u, activation)
    }

    pub fn to_snapshot(&self) -> NetSnapshot {
        NetSnapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            activation: self.activation,
            width: self.width(),
            input_dim: self.input_dim(),
            w: self.w.iter().copied().collect(),
            b: self.b.to_vec(),
            u: self.u.to_vec(),
        }
    }

    pub fn from_snapshot(s: &NetSnapshot) -> Result<Self> {
        if s.format != SNAPSHOT_FORMAT {
            return Err(invalid(format!("unknown snapshot format {:?}", s.format)));
        }
        let w = Array2::from_shape_vec((s.width, s.input_dim), s.w.clone())
            .map_err(|e| invalid(format!("weight array: {e}")))?;
        Self::new(w, Array1::from(s.b.clone()), Array1::from(s.u.clone()), s.activation)
    }
}

/// `Σ_i u_i a_i` per row, summed as mirror pairs `(i, q + i)` so that a
/// symmetric network cancels exactly.
fn paired_output(values: &Array2<f64>, u: &Array1<f64>) -> Array1<f64> {
    let width = u.len();
    let q = width / 2;
    let u = u.as_slice().expect("contiguous");
    values
        .rows()
        .into_iter()
        .map(|row| {
            let a = row.as_slice().expect("contiguous");
            let mut acc = 0.0;
            for i in 0..q {
                acc += u[i] * a[i] + u[q + i] * a[q + i];
            }
            if width % 2 == 1 {
                acc += u[width - 1] * a[width - 1];
            }
            acc
        })
        .collect()
}

/// Magic prefix of the binary snapshot. Layout, all little endian:
/// `"TLN1"`, activation tag (`u8`: 0 = ReLU6, 1 = ReLU), width (`u32`),
/// input dimension (`u32`), then `w` row-major, `b`, `u` as `f64`.
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"TLN1";
pub const SNAPSHOT_FORMAT: &str = "paritylab.two_layer_net.v1";

/// JSON form of a network: dims header plus row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSnapshot {
    pub format: String,
    pub activation: Activation,
    pub width: usize,
    pub input_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub u: Vec<f64>,
}

/// Gradient of a scalar objective with respect to `(W, b, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
    pub du: Array1<f64>,
    pub loss: f64,
    pub exact: bool,
}

impl GradientBundle {
    pub fn zeros_like(net: &TwoLayerNet) -> Self {
        Self {
            dw: Array2::zeros(net.w.dim()),
            db: Array1::zeros(net.width()),
            du: Array1::zeros(net.width()),
            loss: 0.0,
            exact: true,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = |a: f64, b: f64| (a - b).abs();
        let mut m = 0.0f64;
        Zip::from(&self.dw).and(&other.dw).for_each(|&a, &b| m = m.max(d(a, b)));
        Zip::from(&self.db).and(&other.db).for_each(|&a, &b| m = m.max(d(a, b)));
        Zip::from(&self.du).and(&other.du).for_each(|&a, &b| m = m.max(d(a, b)));
        m
    }
}

/// `R = ‖u‖² + Σ‖w_i‖²` and its gradient (zero on `b`).
pub fn regularizer(net: &TwoLayerNet) -> (f64, GradientBundle) {
    let value = net.u.dot(&net.u) + net.w.iter().map(|v| v * v).sum::<f64>();
    let grad = GradientBundle {
        dw: &net.w * 2.0,
        db: Array1::zeros(net.width()),
        du: &net.u * 2.0,
        loss: value,
        exact: true,
    };
    (value, grad)
}

/// Loss and gradient of `Σ weight · ℓ(y, g(x))` over a weighted set.
pub fn gradient_on(net: &TwoLayerNet, set: &WeightedSet) -> GradientBundle {
    let mut grad = GradientBundle::zeros_like(net);
    let act = net.activation;
    set.for_each_chunk(|xs, ys, ws| {
        let mut values = net.preactivations(xs);
        let mut gates = Array2::<f64>::zeros(values.dim());
        Zip::from(&mut values).and(&mut gates).for_each(|v, g| {
            let (a, d) = act.eval(*v);
            *v = a;
            *g = d;
        });
        let out = paired_output(&values, &net.u);
        let mut coef = Array1::<f64>::zeros(out.len());
        for s in 0..out.len() {
            let (l, d) = hinge(ys[s], out[s]);
            grad.loss += ws[s] * l;
            coef[s] = ws[s] * d;
        }
        grad.du += &values.t().dot(&coef);
        Zip::from(gates.rows_mut()).and(&coef).for_each(|mut row, &c| {
            if c == 0.0 {
                row.fill(0.0);
            } else {
                Zip::from(&mut row).and(&net.u).for_each(|g, &u| *g *= c * u);
            }
        });
        grad.dw += &gates.t().dot(&xs);
        grad.db += &gates.sum_axis(Axis(0));
    });
    grad
}

/// Weighted hinge loss.
pub fn loss_on(net: &TwoLayerNet, set: &WeightedSet) -> f64 {
    let mut loss = 0.0;
    set.for_each_chunk(|xs, ys, ws| {
        let out = net.forward_batch(xs);
        for s in 0..out.len() {
            loss += ws[s] * hinge(ys[s], out[s]).0;
        }
    });
    loss
}

/// Weighted rate of `sign(g(x)) = y`; a zero output counts as an error.
pub fn accuracy_on(net: &TwoLayerNet, set: &WeightedSet) -> f64 {
    let mut acc = 0.0;
    set.for_each_chunk(|xs, ys, ws| {
        let out = net.forward_batch(xs);
        for s in 0..out.len() {
            if out[s] * ys[s] > 0.0 {
                acc += ws[s];
            }
        }
    });
    acc
}

/// `∇ E_{D_A}[ℓ(y, g(x))]` over `(W, b, u)`, regulariser excluded.
pub fn population_gradient(net: &TwoLayerNet, task: &ParityTask, mode: &mut EvalMode) -> Result<GradientBundle> {
    check_dims(net, task)?;
    let set = mode.draw(task)?;
    let mut g = gradient_on(net, &set);
    g.exact = mode.is_exact();
    Ok(g)
}

pub fn population_loss(net: &TwoLayerNet, task: &ParityTask, mode: &mut EvalMode) -> Result<f64> {
    check_dims(net, task)?;
    Ok(loss_on(net, &mode.draw(task)?))
}

fn check_dims(net: &TwoLayerNet, task: &ParityTask) -> Result<()> {
    if net.input_dim() != task.n() {
        return Err(invalid(format!("network input {} differs from task dimension {}", net.input_dim(), task.n())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parity::Component;
    use ndarray::array;

    #[test]
    fn relu6_examples() {
        assert_eq!(relu6(-1.0), (0.0, 0));
        assert_eq!(relu6(3.0), (3.0, 1));
        assert_eq!(relu6(7.0), (6.0, 0));
        assert_eq!(relu6(0.0), (0.0, 0));
        assert_eq!(relu6(6.0), (6.0, 0));
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge(1.0, 0.0), (1.0, -1.0));
        assert_eq!(hinge(1.0, 2.0), (0.0, 0.0));
        assert_eq!(hinge(-1.0, 0.5), (1.5, 1.0));
        assert_eq!(hinge(1.0, 1.0), (0.0, 0.0));
    }

    #[test]
    fn symmetric_init_structure() {
        let net = TwoLayerNet::init_symmetric(16, 9, 3, SeedStream::new(3)).unwrap();
        let q = net.q();
        for i in 0..q {
            assert_eq!(net.b[i], 1.0 / 24.0);
            assert_eq!(net.b[q + i], net.b[i]);
            assert_eq!(net.u[q + i], -net.u[i]);
            assert!(net.u[i].abs() <= 3.0);
            for j in 0..9 {
                assert_eq!(net.w[[q + i, j]], net.w[[i, j]]);
                assert!([-1.0, 0.0, 1.0].contains(&net.w[[i, j]]));
            }
        }
        let task = ParityTask::leading(9, 3).unwrap();
        let set = WeightedSet::exact(&task, Component::UniformOnly, 22).unwrap();
        set.expectation(|x, _| {
            assert_eq!(net.forward(x).unwrap(), 0.0);
            0.0
        });
    }

    #[test]
    fn init_is_stable_under_width_growth() {
        let small = TwoLayerNet::init_symmetric(4, 6, 3, SeedStream::new(9)).unwrap();
        let large = TwoLayerNet::init_symmetric(10, 6, 3, SeedStream::new(9)).unwrap();
        for i in 0..4 {
            assert_eq!(small.w.row(i), large.w.row(i));
            assert_eq!(small.u[i], large.u[i]);
        }
    }

    #[test]
    fn init_rejects_even_k() {
        assert!(TwoLayerNet::init_symmetric(4, 6, 4, SeedStream::new(1)).is_err());
    }

    #[test]
    fn zero_frequency_of_first_layer() {
        let q = 2000;
        let n = 50;
        let net = TwoLayerNet::init_symmetric(q, n, 3, SeedStream::new(17)).unwrap();
        let draws = (q * n) as f64;
        let zeros = net.w.slice(ndarray::s![..q, ..]).iter().filter(|&&v| v == 0.0).count() as f64;
        let p = 1.0 / 3.0;
        assert!((zeros / draws - p).abs() < 4.0 * (p * (1.0 - p) / draws).sqrt());
    }

    #[test]
    fn forward_single_active_neuron() {
        let n = 4;
        let mut net = TwoLayerNet::zeros(2, n, Activation::Relu6);
        net.w[[0, 0]] = (n as f64).sqrt();
        net.b[0] = 0.25;
        net.u[0] = 1.0;
        let x = [0.5, -0.5, 0.5, 0.5];
        assert_eq!(net.forward(&x).unwrap(), relu6(1.0 + 0.25).0);
        let x = [-0.5, -0.5, 0.5, 0.5];
        assert_eq!(net.forward(&x).unwrap(), 0.0);
        assert!(net.forward(&[0.5; 3]).is_err());
    }

    #[test]
    fn regularizer_examples() {
        let mut net = TwoLayerNet::zeros(3, 2, Activation::Relu6);
        assert_eq!(regularizer(&net).0, 0.0);
        net.u[0] = 1.0;
        let (v, g) = regularizer(&net);
        assert_eq!(v, 1.0);
        assert_eq!(g.du, array![2.0, 0.0, 0.0]);
        assert!(g.db.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_layer_gradient_at_init_is_linear_branch() {
        // g ≡ 0 at init, so ℓ' = -y and du_i = -E[y σ(⟨w_i,x⟩ + b_i)].
        let task = ParityTask::leading(8, 3).unwrap();
        let net = TwoLayerNet::init_symmetric(5, 8, 3, SeedStream::new(4)).unwrap();
        let g = population_gradient(&net, &task, &mut EvalMode::exact()).unwrap();
        assert!(g.exact);
        assert!((g.loss - 1.0).abs() < 1e-12);
        let set = WeightedSet::exact(&task, Component::FullMixture, 22).unwrap();
        for i in 0..net.width() {
            let direct = -set.expectation(|x, y| {
                let z: f64 = net.w.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + net.b[i];
                y * relu6(z).0
            });
            assert!((g.du[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_gradient_is_deterministic() {
        let task = ParityTask::leading(10, 3).unwrap();
        let net = TwoLayerNet::init_symmetric(6, 10, 3, SeedStream::new(8)).unwrap();
        let a = population_gradient(&net, &task, &mut EvalMode::exact()).unwrap();
        let b = population_gradient(&net, &task, &mut EvalMode::exact()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn binary_and_json_snapshots() {
        let net = TwoLayerNet::init_symmetric(3, 5, 3, SeedStream::new(2)).unwrap();
        let mut buf = Vec::new();
        net.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 13 + 8 * (6 * 5 + 12));
        assert_eq!(TwoLayerNet::read_binary(&buf[..]).unwrap(), net);
        assert!(TwoLayerNet::read_binary(&buf[..20]).is_err());
        let json = serde_json::to_string(&net.to_snapshot()).unwrap();
        let back: NetSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(TwoLayerNet::from_snapshot(&back).unwrap(), net);
    }
}
