//! Walsh spectrum of random features and the norm-based hardness bound.

use paritylab::baselines::{make_feature_map, Bandwidth, BaselineKind};
use paritylab::fourier::{fourier_correlation, hardness_report, parseval_audit, FourierMode};
use paritylab::rng::{streams, SeedStream};

fn main() -> paritylab::Result<()> {
    let n = 8;
    let mut rng = SeedStream::new(3).substream(streams::FEATURES).rng();
    let map = make_feature_map(BaselineKind::ReluRandom, n, 16, Bandwidth::Median, None, &mut rng)?.clamped();

    let report = parseval_audit(&map, n, 22)?;
    println!("max |sum of squared correlations - E[psi^2]| = {:.2e}", report.max_deviation);
    for f in report.features.iter().take(4) {
        println!(
            "feature {:2}: E[psi^2] = {:.4}, strongest subset mask {:#b} (corr {:+.4})",
            f.index, f.squared_norm, f.top_subset, f.top_correlation
        );
    }

    let on_parity = fourier_correlation(&map, 0, &[0, 3, 5], FourierMode::exact())?;
    println!("correlation of feature 0 with a 3-sparse parity: {on_parity:+.5}");

    for (features, budget, k, n) in [(512, 1.0, 3, 50), (512, 1.0, 9, 200), (4096, 0.5, 15, 256)] {
        let h = hardness_report(features, budget, k, n);
        println!("N = {features}, B = {budget}, k = {k}: accuracy <= {:.4}{}", h.bound, h.warning.map(|w| format!(" ({w})")).unwrap_or_default());
    }
    Ok(())
}
