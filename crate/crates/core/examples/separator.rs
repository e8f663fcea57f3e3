//! Build the sparse second layer that separates the parity using only the
//! neurons shaped by the first step, and show the staircase it relies on.
//!
//! `cargo run --release --example separator -- [q]` (needs q around 10^4)

use paritylab::net::TwoLayerNet;
use paritylab::parity::{EvalMode, ParityTask};
use paritylab::rng::{streams, SeedStream};
use paritylab::theory::{build_separator, staircase};
use paritylab::train::gd_step;
use paritylab::Error;

fn main() -> paritylab::Result<()> {
    for k in [3, 5, 7] {
        let s = staircase(k)?;
        println!("k = {k}: exact ramp coefficients {:?}, max error {}", s.exact_coefficients, s.exact_max_error);
    }

    let q: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let (n, k) = (16, 3);
    let task = ParityTask::leading(n, k)?;
    let net0 = TwoLayerNet::init_symmetric(q, n, k, SeedStream::new(1).substream(streams::INIT))?;
    let net1 = gd_step(&net0, &task, 1.0, 0.5, &mut EvalMode::exact())?;
    match build_separator(&net1, &task, 0.1 / k as f64, 1, None) {
        Ok(c) => {
            println!("buckets {:?}, match error {:.4}", c.bucket_sizes, c.max_match_error);
            println!("margin {:.4}, |u*|_2 = {:.2}, |u*|_0 = {}", c.margin, c.l2_norm, c.l0_norm);
        }
        Err(Error::SeparatorInfeasible { r }) => println!("q = {q} leaves bucket r = {r} empty; try a wider network"),
        Err(e) => return Err(e),
    }
    Ok(())
}
