//! Self-contained SVG line plots with optional log axes. Output bytes are a
//! pure function of the input, so identical data plots identically.

use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Copy, Debug, Default)]
pub struct PlotStyle {
    pub log_x: bool,
    pub log_y: bool,
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 560.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"];

pub fn emit_plot(
    series: &[Series],
    style: PlotStyle,
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<(), String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err("refusing to plot an empty series set".to_string());
    }
    let tx = |v: f64| if style.log_x { v.log10() } else { v };
    let ty = |v: f64| if style.log_y { v.log10() } else { v };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if style.log_x && x <= 0.0 || style.log_y && y <= 0.0 {
                continue;
            }
            xs.push(tx(x));
            ys.push(ty(y));
        }
    }
    if xs.is_empty() {
        return Err("no representable points (log axis with nonpositive data)".to_string());
    }
    let (x0, x1) = padded_range(&xs);
    let (y0, y1) = padded_range(&ys);
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / (y1 - y0) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"13\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    // axes box
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    );
    for t in ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#cccccc\"/>",
            MARGIN_T,
            HEIGHT - MARGIN_B
        );
        let label = tick_label(t, style.log_x);
        let _ = writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
            HEIGHT - MARGIN_B + 20.0
        );
    }
    for t in ticks(y0, y1) {
        let y = py(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#cccccc\"/>",
            WIDTH - MARGIN_R
        );
        let label = tick_label(t, style.log_y);
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{label}</text>",
            MARGIN_L - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{y_label}</text>",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for &(x, y) in &s.points {
            if style.log_x && x <= 0.0 || style.log_y && y <= 0.0 {
                continue;
            }
            let cmd = if d.is_empty() { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2} {:.2} ", px(tx(x)), py(ty(y)));
        }
        let _ = writeln!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            d.trim_end()
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\">{}</text>",
            MARGIN_L + 12.0,
            MARGIN_T + 18.0 + 16.0 * i as f64,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    }
    std::fs::write(path, svg).map_err(|e| e.to_string())?;
    Ok(())
}

/// CSV companion written next to every plot.
pub fn write_series_csv(series: &[Series], x_name: &str, y_name: &str, path: &Path) -> Result<(), String> {
    let mut out = format!("series,{x_name},{y_name}\n");
    for s in series {
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                "{},{},{}",
                s.label,
                plapmix::record::format_float(x),
                plapmix::record::format_float(y)
            );
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    }
    std::fs::write(path, out).map_err(|e| e.to_string())
}

fn padded_range(vals: &[f64]) -> (f64, f64) {
    let mut lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= 7.0)
        .unwrap_or(mag * 10.0);
    let first = (lo / step).ceil() * step;
    let mut out = Vec::new();
    let mut t = first;
    while t <= hi + step * 1e-9 {
        out.push((t / step).round() * step);
        t += step;
    }
    out
}

fn tick_label(t: f64, log: bool) -> String {
    if log {
        // t is an exponent of 10
        if (t - t.round()).abs() < 1e-9 {
            format!("1e{}", t.round() as i64)
        } else {
            let exp = t.floor();
            format!("{:.1}e{}", 10f64.powf(t - exp), exp as i64)
        }
    } else if t == 0.0 {
        "0".to_string()
    } else if t.abs() >= 1e4 || t.abs() < 1e-3 {
        format!("{t:.1e}")
    } else {
        let s = format!("{t:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}
