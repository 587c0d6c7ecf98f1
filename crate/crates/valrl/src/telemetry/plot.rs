//! CSV and SVG rendering of aggregated curves. Output depends only on the
//! input curves, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{GroupCurve, TelemetryError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Csv,
    Svg,
}

impl FromStr for PlotFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(PlotFormat::Csv),
            "svg" => Ok(PlotFormat::Svg),
            _ => Err(format!("unknown format `{s}` (expected csv or svg)")),
        }
    }
}

/// `iteration,group,mean,lo,hi`, one row per point. Floats use the shortest
/// representation that parses back to the same value.
pub fn render_csv(curves: &[GroupCurve]) -> String {
    let mut out = String::from("iteration,group,mean,lo,hi\n");
    for curve in curves {
        for p in &curve.points {
            let _ = writeln!(out, "{},{},{},{},{}", p.iteration, csv_field(&curve.group), p.mean, p.lo, p.hi);
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One line per group with its band shaded behind it, axes, ticks and a
/// legend.
pub fn render_svg(curves: &[GroupCurve], title: &str, y_label: &str) -> String {
    let max_iter = curves.iter().flat_map(|c| c.points.iter().map(|p| p.iteration)).max().unwrap_or(0).max(1) as f64;
    let (mut y_min, mut y_max) = curves
        .iter()
        .flat_map(|c| &c.points)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.lo).min(p.mean), hi.max(p.hi).max(p.mean)));
    if !y_min.is_finite() || !y_max.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-12 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_min, y_max) = (y_min - pad, y_max + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |i: f64| LEFT + plot_w * i / max_iter;
    let y = |v: f64| TOP + plot_h * (1.0 - (v - y_min) / (y_max - y_min));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + plot_w / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let iter = frac * max_iter;
        let value = y_min + frac * (y_max - y_min);
        let (tx, ty) = (x(iter), y(value));
        let _ = writeln!(s, r#"<line x1="{tx:.1}" y1="{:.1}" x2="{tx:.1}" y2="{:.1}" stroke="black"/>"#, TOP + plot_h, TOP + plot_h + 5.0);
        let _ = writeln!(s, r#"<text x="{tx:.1}" y="{:.1}" text-anchor="middle">{iter:.0}</text>"#, TOP + plot_h + 18.0);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ty:.1}" x2="{LEFT}" y2="{ty:.1}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{value:.3}</text>"#, LEFT - 8.0, ty + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Iteration</text>"#, LEFT + plot_w / 2.0, HEIGHT - 10.0);
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#, TOP + plot_h / 2.0, TOP + plot_h / 2.0, escape(y_label));

    for (g, curve) in curves.iter().enumerate() {
        let color = PALETTE[g % PALETTE.len()];
        if curve.points.is_empty() {
            continue;
        }
        let mut band = String::new();
        for p in &curve.points {
            let _ = write!(band, "{:.2},{:.2} ", x(p.iteration as f64), y(p.hi));
        }
        for p in curve.points.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", x(p.iteration as f64), y(p.lo));
        }
        let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = curve.points.iter().map(|p| format!("{:.2},{:.2}", x(p.iteration as f64), y(p.mean))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = TOP + 10.0 + 18.0 * g as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{} (n={})</text>"#, lx + 26.0, ly + 4.0, escape(&curve.group), curve.runs);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the curves to `out`. Refuses an empty group list without touching
/// the file system.
pub fn plot(curves: &[GroupCurve], out: &Path, format: PlotFormat, y_label: &str) -> Result<(), TelemetryError> {
    if curves.is_empty() {
        return Err(TelemetryError::NoGroups);
    }
    let text = match format {
        PlotFormat::Csv => render_csv(curves),
        PlotFormat::Svg => render_svg(curves, y_label, y_label),
    };
    fs::write(out, text).map_err(|e| TelemetryError::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::CurvePoint;

    fn curve(name: &str, means: &[f64]) -> GroupCurve {
        GroupCurve {
            group: name.into(),
            runs: 2,
            points: means.iter().enumerate().map(|(i, &m)| CurvePoint { iteration: i as u64, mean: m, lo: m - 0.1, hi: m + 0.1 }).collect(),
        }
    }

    #[test]
    fn csv_rows_and_exact_values() {
        let c = vec![curve("dqn", &[0.1, 1.0 / 3.0, 2.5])];
        let text = render_csv(&c);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,group,mean,lo,hi");
        assert_eq!(lines.len(), 4);
        for (line, p) in lines[1..].iter().zip(&c[0].points) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[2].parse::<f64>().unwrap(), p.mean);
            assert_eq!(f[3].parse::<f64>().unwrap(), p.lo);
            assert_eq!(f[4].parse::<f64>().unwrap(), p.hi);
        }
    }

    #[test]
    fn empty_plot_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("p.csv");
        assert!(matches!(plot(&[], &out, PlotFormat::Csv, "m"), Err(TelemetryError::NoGroups)));
        assert!(!out.exists());
    }

    #[test]
    fn svg_is_deterministic_and_labelled() {
        let c = vec![curve("dqn", &[0.0, 0.5]), curve("a<b", &[1.0, 1.0])];
        let a = render_svg(&c, "t", "train_return_mean");
        assert_eq!(a, render_svg(&c, "t", "train_return_mean"));
        assert!(a.contains("Iteration") && a.contains("train_return_mean") && a.contains("a&lt;b (n=2)"));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert_eq!(a.matches("<polygon").count(), 2);
    }
}
