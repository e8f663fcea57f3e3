use paritylab::baselines::{decouple, make_feature_map, Bandwidth, BaselineKind, HingeModel};
use paritylab::fourier::parity_sign;
use paritylab::mnist::{encode_idx, parse_idx_bytes, strip_label};
use paritylab::net::{gradient_on, loss_on, population_gradient, regularizer, Activation, TwoLayerNet};
use paritylab::parity::{Component, EvalMode, ParityTask, WeightedSet};
use paritylab::rng::{streams, SeedStream};
use paritylab::theory::{varphi, weight_drift_check, zero_gradient_check, GateConvention, VarphiMode};
use paritylab::train::{gd_step, ogd_regret_check, random_quadratic_oracles, schedule_from_paper, train, ConvexOracle, TrainOptions};
use proptest::prelude::*;
use rand::Rng;

fn subset_from_mask(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|j| mask >> j & 1 == 1).collect()
}

fn task_strategy(max_n: usize) -> impl Strategy<Value = ParityTask> {
    (3..=max_n).prop_flat_map(|n| {
        let ks: Vec<usize> = (3..=n).filter(|k| k % 2 == 1).collect();
        (Just(n), proptest::sample::select(ks), any::<u64>())
    })
    .prop_map(|(n, k, seed)| ParityTask::random(n, k, &mut SeedStream::new(seed).rng()).unwrap())
}

/// Subset sign patterns with zero sum, for `k = 3`.
const ZERO_SUM_TRIPLES: [[i8; 3]; 7] =
    [[0, 0, 0], [1, -1, 0], [-1, 1, 0], [1, 0, -1], [-1, 0, 1], [0, 1, -1], [0, -1, 1]];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parity_basis_is_orthonormal(n in 1usize..=10, s in any::<u32>(), t in any::<u32>()) {
        let (s, t) = (s & ((1 << n) - 1), t & ((1 << n) - 1));
        let (a, b) = (subset_from_mask(s, n), subset_from_mask(t, n));
        let set = WeightedSet::uniform_cube(n, 22).unwrap();
        let e = set.expectation(|x, _| parity_sign(x, &a) * parity_sign(x, &b));
        let expected = if s == t { 1.0 } else { 0.0 };
        prop_assert!((e - expected).abs() <= 1e-12, "{e}");
    }

    #[test]
    fn mixture_is_average_of_halves(task in task_strategy(10), coef in prop::collection::vec(-2.0f64..2.0, 10), bias in -1.0f64..1.0) {
        let h = |x: &[f64], y: f64| (x.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>() + bias).tanh() * (1.0 + y);
        let e = |c| WeightedSet::exact(&task, c, 22).unwrap().expectation(h);
        let full = e(Component::FullMixture);
        let half = 0.5 * (e(Component::UniformOnly) + e(Component::CorrelatedOnly));
        prop_assert!((full - half).abs() <= 1e-12, "{full} vs {half}");
    }

    #[test]
    fn correlated_label_is_any_subset_sign(task in task_strategy(10)) {
        let set = WeightedSet::exact(&task, Component::CorrelatedOnly, 22).unwrap();
        let mut ok = true;
        set.expectation(|x, y| {
            for &j in task.subset() {
                ok &= x[j].signum() == y;
            }
            0.0
        });
        prop_assert!(ok);
    }

    #[test]
    fn varphi_is_a_sign_symmetric_probability(
        w in prop::collection::vec(-1i8..=1, 14),
        b in -1.0f64..6.0,
    ) {
        let task = ParityTask::leading(14, 3).unwrap();
        let p = varphi(&w, b, &task, VarphiMode::Exact).unwrap();
        let neg: Vec<i8> = w.iter().map(|v| -v).collect();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(p, varphi(&neg, b, &task, VarphiMode::Exact).unwrap());
    }

    #[test]
    fn regularizer_gradient_matches_differences(seed in any::<u64>()) {
        let net = TwoLayerNet::init_standard(4, 5, Activation::Relu6, &mut SeedStream::new(seed).rng());
        let (_, g) = regularizer(&net);
        let h = 1e-6;
        for (i, j) in [(0, 0), (3, 4), (2, 1)] {
            let (mut p, mut m) = (net.clone(), net.clone());
            p.w[[i, j]] += h;
            m.w[[i, j]] -= h;
            let fd = (regularizer(&p).0 - regularizer(&m).0) / (2.0 * h);
            prop_assert!((fd - g.dw[[i, j]]).abs() < 1e-6);
        }
        prop_assert!(g.db.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn population_gradient_matches_differences(seed in any::<u64>()) {
        let task = ParityTask::leading(5, 3).unwrap();
        let mut rng = SeedStream::new(seed).rng();
        let mut net = TwoLayerNet::init_standard(6, 5, Activation::Relu6, &mut rng);
        net.b.iter_mut().for_each(|b| *b = rng.random_range(0.1..0.5));
        net.u.iter_mut().for_each(|u| *u *= 0.5);
        let set = WeightedSet::exact(&task, Component::FullMixture, 22).unwrap();
        let g = population_gradient(&net, &task, &mut EvalMode::exact()).unwrap();
        let h = 1e-7;
        let fd = |f: &dyn Fn(&mut TwoLayerNet, f64)| {
            let (mut p, mut m) = (net.clone(), net.clone());
            f(&mut p, h);
            f(&mut m, -h);
            (loss_on(&p, &set) - loss_on(&m, &set)) / (2.0 * h)
        };
        let tol = 1e-5;
        for i in 0..6 {
            let d = fd(&|n: &mut TwoLayerNet, d| n.u[i] += d);
            prop_assert!((d - g.du[i]).abs() < tol, "du[{i}] {d} vs {}", g.du[i]);
            let d = fd(&|n: &mut TwoLayerNet, d| n.b[i] += d);
            prop_assert!((d - g.db[i]).abs() < tol, "db[{i}] {d} vs {}", g.db[i]);
            let d = fd(&|n: &mut TwoLayerNet, d| n.w[[i, i % 5]] += d);
            prop_assert!((d - g.dw[[i, i % 5]]).abs() < tol, "dw[{i}] {d} vs {}", g.dw[[i, i % 5]]);
        }
    }

    #[test]
    fn exact_gradient_is_bitwise_deterministic(seed in any::<u64>()) {
        let task = ParityTask::leading(6, 3).unwrap();
        let net = TwoLayerNet::init_symmetric(5, 6, 3, SeedStream::new(seed)).unwrap();
        let a = population_gradient(&net, &task, &mut EvalMode::exact()).unwrap();
        let b = population_gradient(&net, &task, &mut EvalMode::exact()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn symmetric_init_mirrors_the_gradient(seed in any::<u64>(), q in 1usize..8) {
        let task = ParityTask::leading(7, 3).unwrap();
        let net = TwoLayerNet::init_symmetric(q, 7, 3, SeedStream::new(seed)).unwrap();
        let set = WeightedSet::exact(&task, Component::FullMixture, 22).unwrap();
        prop_assert!(net.forward_batch(set.rows(0, set.len()).view()).iter().all(|v| *v == 0.0));
        let g = gradient_on(&net, &set);
        for i in 0..q {
            prop_assert_eq!(g.du[q + i], g.du[i]);
            prop_assert_eq!(g.db[q + i], -g.db[i]);
            for j in 0..7 {
                prop_assert_eq!(g.dw[[q + i, j]], -g.dw[[i, j]]);
            }
        }
    }

    #[test]
    fn second_layer_stays_below_k_over_root_n(seed in any::<u64>(), n in 6usize..=16) {
        let task = ParityTask::leading(n, 3).unwrap();
        let net0 = TwoLayerNet::init_symmetric(16, n, 3, SeedStream::new(seed)).unwrap();
        let net1 = gd_step(&net0, &task, 1.0, 0.5, &mut EvalMode::exact()).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        prop_assert!(net1.u.iter().all(|u| u.abs() <= bound + 1e-9));
    }

    #[test]
    fn feature_maps_are_deterministic_per_seed(seed in any::<u64>()) {
        let make = || make_feature_map(BaselineKind::GaussianRff, 6, 8, Bandwidth::Fixed(1.5), None, &mut SeedStream::new(seed).rng()).unwrap();
        let x = [0.3, -0.1, 0.7, 0.0, -0.4, 0.2];
        prop_assert_eq!(make().embed(&x).unwrap(), make().embed(&x).unwrap());
    }

    #[test]
    fn decoupled_net_is_affine_in_parameters(seed in any::<u64>(), t in -2.0f64..3.0) {
        let mut rng = SeedStream::new(seed).rng();
        let net0 = TwoLayerNet::init_standard(5, 4, Activation::Relu, &mut rng);
        let a = decouple(&net0);
        let mut b = a.clone();
        let delta: Vec<f64> = (0..b.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        b.apply_update(&delta);
        let mut mid = a.clone();
        mid.apply_update(&delta.iter().map(|d| t * d).collect::<Vec<_>>());
        let task = ParityTask::leading(4, 3).unwrap();
        let set = WeightedSet::exact(&task, Component::FullMixture, 22).unwrap();
        let xs = set.rows(0, set.len());
        let (fa, fb, fm) = (a.predict_batch(xs.view()), b.predict_batch(xs.view()), mid.predict_batch(xs.view()));
        for s in 0..fa.len() {
            let expected = (1.0 - t) * fa[s] + t * fb[s];
            prop_assert!((fm[s] - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn idx_round_trips(d0 in 1usize..5, d1 in 1usize..5, fill in any::<u8>()) {
        let data = vec![fill; d0 * d1];
        let t = parse_idx_bytes(&encode_idx(&[d0, d1], &data)).unwrap();
        prop_assert_eq!(t.dims, vec![d0, d1]);
        prop_assert_eq!(t.data, data);
    }

    #[test]
    fn strip_label_tracks_digit_sum(digits in prop::collection::vec(0u8..10, 1..6)) {
        let sum: u32 = digits.iter().map(|&d| d as u32).sum();
        prop_assert_eq!(strip_label(&digits) > 0.0, sum % 2 == 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn zero_gradient_is_exact(
        pattern in 0usize..7,
        rest in prop::collection::vec(-1i8..=1, 9),
        b in -2.0f64..7.0,
        indicator in any::<bool>(),
    ) {
        let task = ParityTask::leading(12, 3).unwrap();
        let mut w = ZERO_SUM_TRIPLES[pattern].to_vec();
        w.extend(rest);
        let convention = if indicator { GateConvention::Indicator } else { GateConvention::Relu6 };
        let r = zero_gradient_check(&w, b, &task, convention).unwrap();
        prop_assert!(r.is_zero(1e-12), "{r:?}");
    }
}

struct Hinge {
    a: Vec<f64>,
    y: f64,
}

impl ConvexOracle for Hinge {
    fn value_and_gradient(&self, t: &[f64]) -> (f64, Vec<f64>) {
        let m = self.y * t.iter().zip(&self.a).map(|(p, q)| p * q).sum::<f64>();
        if m < 1.0 {
            (1.0 - m, self.a.iter().map(|v| -self.y * v).collect())
        } else {
            (0.0, vec![0.0; t.len()])
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ogd_inequality_holds_on_quadratics(seed in any::<u64>(), eta in 0.001f64..0.5) {
        let mut rng = SeedStream::new(seed).substream(streams::THEORY).rng();
        let oracles = random_quadratic_oracles(3, 40, &mut rng);
        let star: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r = ogd_regret_check(&oracles, eta, &[0.0; 3], &star).unwrap();
        prop_assert!(r.holds, "{r:?}");
    }

    #[test]
    fn ogd_inequality_holds_on_hinge_losses(seed in any::<u64>(), eta in 0.001f64..1.0) {
        let mut rng = SeedStream::new(seed).rng();
        let oracles: Vec<Hinge> = (0..30)
            .map(|_| Hinge { a: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(), y: if rng.random::<bool>() { 1.0 } else { -1.0 } })
            .collect();
        let star: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = ogd_regret_check(&oracles, eta, &[0.0; 4], &star).unwrap();
        prop_assert!(r.holds, "{r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sampler_agrees_with_enumeration(seed in any::<u64>()) {
        let task = ParityTask::leading(9, 3).unwrap();
        let exact = WeightedSet::exact(&task, Component::FullMixture, 22).unwrap();
        let m = 20_000;
        let sample = WeightedSet::sample(&task, m, &mut SeedStream::new(seed).rng()).unwrap();
        let tests: [&dyn Fn(&[f64], f64) -> f64; 5] = [
            &|x, _| x[0] * 3.0,
            &|x, y| x[1] * y * 3.0,
            &|x, _| (x[0] + x[1] + x[2]).abs(),
            &|x, y| if x[4] > 0.0 { y } else { 0.0 },
            &|x, _| x.iter().map(|v| v * v).sum::<f64>() + x[8],
        ];
        for f in tests {
            let mean = exact.expectation(f);
            let second = exact.expectation(|x, y| f(x, y).powi(2));
            let se = ((second - mean * mean).max(0.0) / m as f64).sqrt().max(1e-12);
            let est = sample.expectation(f);
            prop_assert!((est - mean).abs() <= 5.0 * se, "{est} vs {mean} (se {se})");
        }
    }

    #[test]
    fn drift_stays_within_bounds(seed in any::<u64>()) {
        let (n, k, q, t) = (10, 3, 16, 12);
        let task = ParityTask::leading(n, k).unwrap();
        let net0 = TwoLayerNet::init_symmetric(q, n, k, SeedStream::new(seed)).unwrap();
        let schedule = schedule_from_paper(t, k, q, n, 0.0).unwrap();
        let opts = TrainOptions { keep_snapshots: true, ..Default::default() };
        let out = train(&net0, &task, &schedule, &mut EvalMode::exact(), &opts).unwrap();
        let r = weight_drift_check(out.snapshots.as_ref().unwrap(), schedule.eta[1], 0.0, k, n).unwrap();
        prop_assert!(r.holds, "w slack {} b slack {}", r.min_w_slack, r.min_b_slack);
    }
}
