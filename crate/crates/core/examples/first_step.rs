//! One exact gradient step from the symmetric initialization and the
//! resulting neuron census.
//!
//! `cargo run --release --example first_step -- [q]`

use paritylab::net::TwoLayerNet;
use paritylab::parity::{EvalMode, ParityTask};
use paritylab::rng::{streams, SeedStream};
use paritylab::theory::{first_step_diagnostics, ternary_zero_sum_probability};
use paritylab::train::gd_step;

fn main() -> paritylab::Result<()> {
    let q: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000);
    let (n, k) = (16, 3);
    let task = ParityTask::leading(n, k)?;
    let net0 = TwoLayerNet::init_symmetric(q, n, k, SeedStream::new(1).substream(streams::INIT))?;
    let net1 = gd_step(&net0, &task, 1.0, 0.5, &mut EvalMode::exact())?;
    let max_u = net1.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("max |u| after the step: {max_u:.4} (k/sqrt(n) = {:.4})", k as f64 / (n as f64).sqrt());

    let s = first_step_diagnostics(&net0, &net1, &task)?.summary;
    println!(
        "P(sum_A w = 0): {:.4} +- {:.4} (exact {:.4})",
        s.sum_zero_fraction,
        s.sum_zero_std_error,
        ternary_zero_sum_probability(k)
    );
    println!("good neurons: {:.4} +- {:.4}, floor {:.4}", s.good_fraction, s.good_std_error, s.good_fraction_floor);
    println!("C1 = {:.4}, C2 (n-1) = {:.4}, C3 sqrt(n) = {:.4}", s.c1, s.c2_scaled, s.c3_scaled);
    println!("alpha over good neurons in [{:.3}, {:.3}]", s.alpha_min, s.alpha_max);
    Ok(())
}
