//! Digit-strip parity: the ReLU network, its frozen-gate linearization and
//! two random-feature models.
//!
//! `cargo run --release --example mnist_parity -- <dir with the four IDX files> [k]`
//!
//! Without a directory a small synthetic digit set is generated, which only
//! exercises the pipeline.

use std::path::PathBuf;

use paritylab::experiments::{run_mnist_parity, ExperimentConfig, ExperimentKind, MNIST_FILES};
use paritylab::mnist::encode_idx;
use paritylab::rng::SeedStream;
use rand::Rng;

fn synthetic_digits(dir: &std::path::Path, count: usize, seed: u64) -> std::io::Result<()> {
    let mut rng = SeedStream::new(seed).rng();
    let labels: Vec<u8> = (0..count).map(|_| rng.random_range(0..10)).collect();
    let mut pixels = Vec::with_capacity(count * 784);
    for &d in &labels {
        // A bright bar whose row encodes the digit, over faint noise.
        for r in 0..28 {
            for _ in 0..28 {
                let on = r / 2 == d as usize + 2;
                pixels.push(if on { 200 + rng.random_range(0..56) } else { rng.random_range(0..40) });
            }
        }
    }
    let (images, label_file) = if seed == 0 { (MNIST_FILES[0], MNIST_FILES[1]) } else { (MNIST_FILES[2], MNIST_FILES[3]) };
    std::fs::write(dir.join(images), encode_idx(&[count, 28, 28], &pixels))?;
    std::fs::write(dir.join(label_file), encode_idx(&[count], &labels))
}

fn main() -> paritylab::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().map(PathBuf::from);
    let k: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let mut config = ExperimentConfig::for_kind(ExperimentKind::Mnist);
    config.mnist_k = k;
    config.out = std::env::temp_dir().join("paritylab_runs");
    match dir {
        Some(d) => config.mnist_dir = Some(d),
        None => {
            let d = std::env::temp_dir().join("paritylab_synthetic_digits");
            std::fs::create_dir_all(&d)?;
            synthetic_digits(&d, 2000, 0)?;
            synthetic_digits(&d, 500, 1)?;
            config.mnist_dir = Some(d);
            config.train_strips = 2000;
            config.test_strips = 500;
            config.epochs = 3;
            config.width = 64;
            config.features = 64;
        }
    }
    let artifact = run_mnist_parity(&config)?;
    for m in artifact.summary["models"].as_array().into_iter().flatten() {
        println!("{:>14}: final test accuracy {:.4}", m["model"].as_str().unwrap_or("?"), m["final_accuracy"].as_f64().unwrap_or(f64::NAN));
    }
    println!("artifacts in {}", artifact.dir.display());
    Ok(())
}
