//! Minimal self-contained SVG 1.1 line/marker plots. Output depends only on
//! the input values, so repeated runs produce identical bytes.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::OrderFit;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axes {
    Linear,
    LogLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub markers: bool,
    pub line: bool,
    pub dashed: bool,
}

impl Series {
    pub fn points(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, markers: true, line: true, dashed: false }
    }

    pub fn dashed_line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, markers: false, line: true, dashed: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub axes: Axes,
    pub series: Vec<Series>,
    pub annotation: Option<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = values
            .map(|v| if log { v.log10() } else { v })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
            lo -= pad;
            hi += pad;
        } else if !log {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    /// Tick positions in data units with their labels.
    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (lo, hi) = (self.lo.round() as i32, self.hi.round() as i32);
            let step = ((hi - lo) as f64 / 6.0).ceil().max(1.0) as i32;
            (lo..=hi).step_by(step as usize).map(|e| (10f64.powi(e), format!("1e{e}"))).collect()
        } else {
            (0..=4)
                .map(|k| {
                    let v = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
                    (v, format!("{v:.3}"))
                })
                .collect()
        }
    }
}

/// Renders `plot`. Refuses plots with no points and, on log axes, nonpositive values.
pub fn render(plot: &Plot) -> Result<String> {
    let all: Vec<(f64, f64)> = plot.series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::Misuse("cannot plot an empty series".into()));
    }
    if all.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Misuse("plot points must be finite".into()));
    }
    let log = plot.axes == Axes::LogLog;
    if log && all.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::Misuse("log-log plot needs positive values".into()));
    }
    let sx = Scale::new(all.iter().map(|p| p.0), log);
    let sy = Scale::new(all.iter().map(|p| p.1), log);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |x: f64| LEFT + sx.frac(x) * pw;
    let py = |y: f64| TOP + (1.0 - sy.frac(y)) * ph;

    let mut s = String::new();
    let w = &mut s;
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(w, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&plot.title))
        .unwrap();
    writeln!(w, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
    for (v, label) in sx.ticks() {
        let x = px(v);
        writeln!(w, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0).unwrap();
        writeln!(w, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0).unwrap();
    }
    for (v, label) in sy.ticks() {
        let y = py(v);
        writeln!(w, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0).unwrap();
    }
    writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0, escape(&plot.x_label))
        .unwrap();
    writeln!(
        w,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&plot.y_label)
    )
    .unwrap();

    for (k, series) in plot.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        if series.line && series.points.len() > 1 {
            let path: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            writeln!(w, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, path.join(" "))
                .unwrap();
        }
        if series.markers {
            for &(x, y) in &series.points {
                writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#, px(x), py(y)).unwrap();
            }
        }
        let ly = TOP + 16.0 + 16.0 * k as f64;
        writeln!(w, r#"<text x="{:.2}" y="{ly:.2}" fill="{color}">{}</text>"#, LEFT + 10.0, escape(&series.label)).unwrap();
    }
    if let Some(note) = &plot.annotation {
        let ly = TOP + 16.0 + 16.0 * plot.series.len() as f64;
        writeln!(w, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, LEFT + 10.0, escape(note)).unwrap();
    }
    writeln!(w, "</svg>").unwrap();
    Ok(s)
}

/// Log-log error plot with the fitted power law dashed and its slope noted.
pub fn order_plot(quantity: &str, points: &[(f64, f64)], fit: Option<&OrderFit>, expected: f64) -> Result<String> {
    let positive: Vec<(f64, f64)> = points.iter().copied().filter(|&(e, err)| e > 0.0 && err > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::Misuse(format!("no positive errors to plot for {quantity}")));
    }
    let mut series = vec![Series::points("measured", positive.clone())];
    let annotation = match fit.filter(|f| !f.no_fit) {
        Some(f) => {
            let (lo, hi) = positive.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
            let line = [lo, hi].map(|e| (e, (f.intercept + f.order * e.ln()).exp()));
            series.push(Series::dashed_line("fit", line.to_vec()));
            let floor = if f.floor_flag { ", floor flagged" } else { "" };
            format!("slope {:.3} (expected {expected}), r2 {:.4}{floor}", f.order, f.r2)
        }
        None => "too few points for a fit".to_string(),
    };
    render(&Plot {
        title: quantity.to_string(),
        x_label: "eps".into(),
        y_label: "error".into(),
        axes: Axes::LogLog,
        series,
        annotation: Some(annotation),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot(points: Vec<(f64, f64)>, axes: Axes) -> Plot {
        Plot {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            axes,
            series: vec![Series::points("s", points)],
            annotation: None,
        }
    }

    #[test]
    fn two_points_give_two_markers_and_a_line() {
        let svg = render(&plot(vec![(0.0, 1.0), (1.0, 2.0)], Axes::Linear)).unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn empty_series_is_refused() {
        assert!(render(&plot(vec![], Axes::Linear)).is_err());
        assert!(render(&plot(vec![(0.0, 1.0)], Axes::LogLog)).is_err());
    }

    #[test]
    fn order_overlay_is_dashed_and_annotated() {
        let pts = [(0.1, 1e-2), (0.05, 2.5e-3), (0.025, 6.25e-4)];
        let fit = crate::harness::fit_order(&pts.map(|(e, r)| (e, r, false)));
        let svg = order_plot("intake", &pts, Some(&fit), 2.0).unwrap();
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("slope 2.000"));
        assert_eq!(svg, order_plot("intake", &pts, Some(&fit), 2.0).unwrap());
    }
}
