//! Learning-curve files: the `model,step,accuracy,loss` CSV and its SVG plot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::csv_err;

pub const CURVE_HEADER: [&str; 4] = ["model", "step", "accuracy", "loss"];
pub const Y_MIN: f64 = 0.45;
pub const Y_MAX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub model: String,
    pub step: usize,
    pub accuracy: f64,
    pub loss: f64,
}

pub fn write_curves(rows: &[CurveRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CURVE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.model.clone(), r.step.to_string(), r.accuracy.to_string(), r.loss.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a curves file, checking the header exactly.
pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CURVE_HEADER) {
        return Err(Error::Schema(format!("header {:?}, expected {CURVE_HEADER:?}", header.iter().collect::<Vec<_>>())));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// One polyline per model, accuracy against step, on the fixed range
/// `[0.45, 1]`. Nothing is written when the file has no rows.
pub fn emit_plot(csv_path: &Path, out_path: &Path) -> Result<()> {
    emit_plot_with_references(csv_path, out_path, &[])
}

/// [`emit_plot`] with extra dashed horizontal lines `(label, accuracy)`.
pub fn emit_plot_with_references(csv_path: &Path, out_path: &Path, references: &[(&str, f64)]) -> Result<()> {
    let rows = read_curves(csv_path)?;
    if rows.is_empty() {
        return Err(Error::Schema(format!("{} has no data rows", csv_path.display())));
    }
    std::fs::write(out_path, render_svg(&rows, references))?;
    Ok(())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub fn render_svg(rows: &[CurveRow], references: &[(&str, f64)]) -> String {
    let mut series: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        series.entry(r.model.as_str()).or_default().push((r.step, r.accuracy));
    }
    let max_step = rows.iter().map(|r| r.step).max().unwrap_or(0).max(1) as f64;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |s: f64| LEFT + plot_w * s / max_step;
    let y = |a: f64| TOP + plot_h * (Y_MAX - a.clamp(Y_MIN, Y_MAX)) / (Y_MAX - Y_MIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#);
    for i in 0..=11 {
        let a = Y_MIN + 0.05 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{yy:.2}" x2="{LEFT}" y2="{yy:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{a:.2}</text>"#,
            LEFT - 4.0,
            LEFT - 6.0,
            y(a) + 4.0,
            yy = y(a)
        );
    }
    for i in 0..=5 {
        let s = max_step * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{xx:.2}" y1="{}" x2="{xx:.2}" y2="{}" stroke="black"/><text x="{xx:.2}" y="{}" text-anchor="middle">{}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 4.0,
            TOP + plot_h + 16.0,
            s.round(),
            xx = x(s)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch / step</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">accuracy</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for (label, a) in references {
        let _ = writeln!(
            svg,
            r#"<line class="reference" x1="{LEFT}" y1="{yy:.2}" x2="{}" y2="{yy:.2}" stroke="gray" stroke-dasharray="5,4"/><text x="{}" y="{:.2}" fill="gray">{}</text>"#,
            LEFT + plot_w,
            LEFT + plot_w + 6.0,
            y(*a) + 4.0,
            escape(label),
            yy = y(*a)
        );
    }
    for (i, (model, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = points.iter().map(|&(s, a)| format!("{:.2},{:.2}", x(s as f64), y(a))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = TOP + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            LEFT + plot_w + 40.0,
            LEFT + plot_w + 56.0,
            LEFT + plot_w + 60.0,
            ly + 4.0,
            escape(model)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
