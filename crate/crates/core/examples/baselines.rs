//! Linear models over fixed embeddings on the same task: random ReLU and
//! Fourier features, and the frozen-gate linearization of a network.

use paritylab::baselines::{
    decouple, make_feature_map, train_linear_hinge, Bandwidth, BaselineKind, EvalData, HingeTrainConfig, LinearModel,
    Optimizer, TrainingData,
};
use paritylab::net::{Activation, TwoLayerNet};
use paritylab::parity::{ParityTask, WeightedSet};
use paritylab::rng::{streams, SeedStream};

fn main() -> paritylab::Result<()> {
    let (n, k) = (30, 3);
    let root = SeedStream::new(0);
    let task = ParityTask::leading(n, k)?;
    let eval = WeightedSet::sample(&task, 4096, &mut root.substream(streams::EVALUATION).rng())?;
    let probe = WeightedSet::sample(&task, 1024, &mut root.substream(streams::FEATURES).rng())?;
    let config = HingeTrainConfig { epochs: 60, batch: 4096, optimizer: Optimizer::default() };

    for (i, kind) in [BaselineKind::ReluRandom, BaselineKind::GaussianRff].into_iter().enumerate() {
        let mut rng = root.substream(streams::FEATURES).substream(i as u64 + 1).rng();
        let map = make_feature_map(kind, n, 512, Bandwidth::Median, Some(probe.rows(0, probe.len()).view()), &mut rng)?;
        let mut model = LinearModel::new(map, None);
        let mut train_rng = root.substream(streams::BASELINE_TRAIN).substream(i as u64).rng();
        let curve = train_linear_hinge(&mut model, TrainingData::Task { task: &task, samples: 4096 }, EvalData::Set(&eval), &config, &mut train_rng)?;
        let best = curve.iter().map(|p| p.accuracy).fold(0.0, f64::max);
        println!("{:>13}: best accuracy {best:.4}", kind.name());
    }

    let net0 = TwoLayerNet::init_standard(256, n, Activation::Relu6, &mut root.substream(streams::INIT).rng());
    let mut linearized = decouple(&net0);
    let mut rng = root.substream(streams::BASELINE_TRAIN).substream(9).rng();
    let curve = train_linear_hinge(&mut linearized, TrainingData::Task { task: &task, samples: 4096 }, EvalData::Set(&eval), &config, &mut rng)?;
    let best = curve.iter().map(|p| p.accuracy).fold(0.0, f64::max);
    println!("frozen gates : best accuracy {best:.4}");
    Ok(())
}
