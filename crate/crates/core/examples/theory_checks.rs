//! Exact gradient identities behind the analysis, evaluated directly.

use paritylab::parity::ParityTask;
use paritylab::rng::{streams, SeedStream};
use paritylab::theory::{
    correlated_moments, drift_bounds, uniform_gradient_stat, varphi, zero_gradient_check, GateConvention, VarphiMode,
};

fn main() -> paritylab::Result<()> {
    let task = ParityTask::leading(12, 3)?;
    let w: Vec<i8> = vec![1, -1, 0, 1, 1, -1, 0, 0, 1, -1, 1, 0];
    for convention in [GateConvention::Relu6, GateConvention::Indicator] {
        let r = zero_gradient_check(&w, 0.4, &task, convention)?;
        println!("{convention:?}: off-subset {:.1e}, bias {:.1e}", r.max_abs_off_a, r.abs_bias_term);
    }
    let unbalanced: Vec<i8> = vec![1, 1, 0, 1, 1, -1, 0, 0, 1, -1, 1, 0];
    let r = correlated_moments(&unbalanced, 0.4, &task, GateConvention::Relu6)?;
    println!("with sum_A w = 2 the moments survive: {:.4}", r.max_abs_off_a);

    let mut rng = SeedStream::new(0).substream(streams::THEORY).rng();
    let u = uniform_gradient_stat(&task, 11, 0.1, 200, 10.0, GateConvention::Relu6, &mut rng)?;
    println!("uniform-half coordinate term: median {:.2e}, q99 {:.2e}, threshold {:.2e}", u.coordinate_term.median, u.coordinate_term.q99, u.threshold);

    let phi = varphi(&w, 0.4, &task, VarphiMode::Exact)?;
    println!("activation window probability: {phi:.4}");
    for t in [2, 5, 10] {
        let (w_bound, b_bound) = drift_bounds(t, 0.05, 0.0, 3, 12);
        println!("t = {t}: |w_t - w_1| <= {w_bound:.4}, |b_t - b_1| <= {b_bound:.4}");
    }
    Ok(())
}
