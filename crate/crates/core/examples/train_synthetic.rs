//! Train the two-layer ReLU6 network by Monte-Carlo population gradient
//! descent and export its trace.

use paritylab::net::TwoLayerNet;
use paritylab::parity::{EvalMode, ParityTask};
use paritylab::rng::{streams, SeedStream};
use paritylab::train::{schedule_from_paper, train, Evaluation, TrainOptions};

fn main() -> paritylab::Result<()> {
    let (n, k, q, steps) = (30, 3, 256, 150);
    let root = SeedStream::new(0);
    let task = ParityTask::leading(n, k)?;
    let net0 = TwoLayerNet::init_symmetric(q, n, k, root.substream(streams::INIT))?;
    let schedule = schedule_from_paper(steps, k, q, n, 0.0)?.with_tail_eta(1.0)?;
    let mut mode = EvalMode::monte_carlo(4096, root.substream(streams::GRADIENT).rng());
    let options = TrainOptions {
        evaluation: Evaluation::matching(&mode, root.substream(streams::EVALUATION)),
        keep_snapshots: false,
    };
    let out = train(&net0, &task, &schedule, &mut mode, &options)?;
    for r in out.trace.records.iter().step_by(25) {
        println!("step {:3}: loss {:.4}, accuracy {:.4}, |u| {:.3}", r.step, r.loss, r.accuracy, r.u_norm);
    }
    let s = out.trace.summary();
    println!("best loss {:.4} at step {} (accuracy {:.4})", s.best_loss, s.best_step, s.best_accuracy);

    let path = std::env::temp_dir().join("paritylab_trace.csv");
    out.trace.write_csv(std::fs::File::create(&path)?)?;
    println!("trace written to {}", path.display());
    Ok(())
}
