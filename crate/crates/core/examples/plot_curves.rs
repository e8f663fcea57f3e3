//! Write a curves file by hand and render it.

use paritylab::plot::{emit_plot, write_curves, CurveRow};

fn main() -> paritylab::Result<()> {
    let mut rows = Vec::new();
    for (model, rate) in [("network", 0.25), ("features", 0.05)] {
        for step in 0..=10 {
            let accuracy = 0.5 + 0.5 * (1.0 - (-rate * step as f64).exp());
            rows.push(CurveRow { model: model.into(), step, accuracy, loss: 1.0 - accuracy });
        }
    }
    let dir = std::env::temp_dir();
    let csv = dir.join("paritylab_curves.csv");
    let svg = dir.join("paritylab_curves.svg");
    write_curves(&rows, &csv)?;
    emit_plot(&csv, &svg)?;
    println!("{} -> {}", csv.display(), svg.display());
    Ok(())
}
