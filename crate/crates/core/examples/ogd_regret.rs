//! The online gradient descent regret inequality, on random quadratics and
//! on the second layer of a training run replayed as an online problem.

use paritylab::net::TwoLayerNet;
use paritylab::parity::{Component, EvalMode, ParityTask, WeightedSet};
use paritylab::rng::{streams, SeedStream};
use paritylab::train::{ogd_regret_check, random_quadratic_oracles, schedule_from_paper, second_layer_oracles, train, TrainOptions};

fn main() -> paritylab::Result<()> {
    let mut rng = SeedStream::new(0).substream(streams::THEORY).rng();
    let oracles = random_quadratic_oracles(4, 100, &mut rng);
    let r = ogd_regret_check(&oracles, 0.05, &[0.0; 4], &[0.3, -0.2, 0.5, 0.0])?;
    println!("quadratics: lhs {:.4} <= rhs {:.4}: {}", r.lhs, r.rhs, r.holds);

    let task = ParityTask::leading(10, 3)?;
    let net0 = TwoLayerNet::init_symmetric(32, 10, 3, SeedStream::new(0).substream(streams::INIT))?;
    let schedule = schedule_from_paper(30, 3, 32, 10, 0.0)?;
    let opts = TrainOptions { keep_snapshots: true, ..Default::default() };
    let out = train(&net0, &task, &schedule, &mut EvalMode::exact(), &opts)?;
    let snaps = out.snapshots.expect("requested");
    let set = WeightedSet::exact(&task, Component::FullMixture, 22)?;
    let oracles = second_layer_oracles(&snaps, &set);
    let theta1 = snaps[1].u.to_vec();
    let r = ogd_regret_check(&oracles, schedule.eta[1], &theta1, &snaps.last().expect("nonempty").u.to_vec())?;
    println!("second layer replay over {} steps: lhs {:.4} <= rhs {:.4}: {}", r.steps, r.lhs, r.rhs, r.holds);
    Ok(())
}
