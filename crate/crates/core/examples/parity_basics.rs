//! Sparse parity on the scaled cube: labels, sampling and exact expectations.

use paritylab::parity::{enumerate_support, Component, ParityTask, WeightedSet};
use paritylab::rng::{streams, SeedStream};

fn main() -> paritylab::Result<()> {
    let task = ParityTask::new(10, vec![1, 4, 7])?;
    let s = task.scale();
    let mut x = vec![s; 10];
    x[4] = -s;
    println!("f_A(x) with one negative subset coordinate: {}", task.label(&x)?);

    let mut rng = SeedStream::new(7).substream(streams::EVALUATION).rng();
    for _ in 0..3 {
        let ex = task.sample(&mut rng);
        let negatives = ex.x.iter().filter(|v| **v < 0.0).count();
        println!("sample with {negatives} negative coordinates, label {:+}", ex.y);
    }

    for component in [Component::UniformOnly, Component::CorrelatedOnly, Component::FullMixture] {
        let atoms = enumerate_support(&task, component, 22)?;
        let mass: f64 = atoms.iter().map(|a| a.weight).sum();
        println!("{component:?}: {} atoms, total mass {mass}", atoms.len());
    }

    // E[x_1 f_A(x)] vanishes on the uniform half but not on the correlated one.
    let full = WeightedSet::exact(&task, Component::FullMixture, 22)?;
    let uniform = WeightedSet::exact(&task, Component::UniformOnly, 22)?;
    let corr = |set: &WeightedSet| set.expectation(|x, y| x[1] * y);
    println!("E[x_1 y]: mixture {:.6}, uniform {:.6}", corr(&full), corr(&uniform));
    Ok(())
}
