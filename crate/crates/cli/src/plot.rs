//! Minimal SVG line charts. Output depends only on the input data, so the
//! same sweep always renders to the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use ncs_core::Trajectory;

use crate::error::CliError;
use crate::sweep::SweepRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
/// Points kept per trajectory series.
const MAX_POINTS: usize = 1500;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    (x0, x1, y0, y1)
}

/// Renders `series` as an SVG document with axes, tick labels and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ =
        writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ =
            writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, sx(xv), bottom + 16.0, tick(xv));
        let _ =
            writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, sy(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (k, series) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let mut d = String::new();
        for (i, &(x, y)) in series.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if i == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#);
        for &(x, y) in series.points.iter().filter(|_| series.points.len() <= 20) {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = top + 4.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            right - 130.0,
            right - 106.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, right - 100.0, ly + 4.0, escape(&series.label));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One series per `(protocol, lambda mode)` of `T̄` against `d`.
pub fn t_bar_series(rows: &[SweepRow]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        let label = format!("{} ({})", r.protocol, r.lambda_mode);
        match out.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((r.d, r.t_bar_mean)),
            None => out.push(Series { label, points: vec![(r.d, r.t_bar_mean)], dashed: r.lambda_mode == "fixed" }),
        }
    }
    out
}

/// `x₁(t)` and `x₂(t)` of each trajectory; the second trajectory is dashed.
pub fn state_series(trajectories: &[(f64, Trajectory)]) -> Vec<Series> {
    let mut out = Vec::new();
    for (k, (d, traj)) in trajectories.iter().enumerate() {
        let stride = traj.samples.len().div_ceil(MAX_POINTS).max(1);
        for component in 0..2 {
            let points = traj
                .samples
                .iter()
                .step_by(stride)
                .filter_map(|s| s.state.x.get(component).map(|&x| (s.t, x)))
                .collect();
            out.push(Series { label: format!("x{} d={d}", component + 1), points, dashed: k % 2 == 1 });
        }
    }
    out
}

/// Writes `t_bar_vs_d.svg` and, when trajectories are given, `states.svg`.
/// An empty summary writes nothing.
pub fn emit_plots(
    rows: &[SweepRow],
    trajectories: &[(f64, Trajectory)],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    if rows.is_empty() {
        warn!("empty sweep summary; no plots written");
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut written = Vec::new();
    let chart = line_chart("Average transmission interval", "deadband d", "mean interval [s]", &t_bar_series(rows));
    let path = out_dir.join("t_bar_vs_d.svg");
    fs::write(&path, chart).map_err(|e| CliError::io(&path, e))?;
    written.push(path);
    if !trajectories.is_empty() {
        let chart = line_chart("Plant states", "t [s]", "x", &state_series(trajectories));
        let path = out_dir.join("states.svg");
        fs::write(&path, chart).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
