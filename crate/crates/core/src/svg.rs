//! Deterministic SVG bar charts for histograms on a 1-D support.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array1;

use crate::error::{OtError, Result};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 400.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// One chart: grouped bars, one group per bin and one bar per series.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub series: Vec<(String, Array1<f64>)>,
}

impl Panel {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), series: Vec::new() }
    }

    pub fn with_series(mut self, label: impl Into<String>, values: Array1<f64>) -> Self {
        self.series.push((label.into(), values));
        self
    }
}

fn num(x: f64) -> String {
    // fixed precision keeps the output byte-stable
    let s = format!("{x:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn validate(panel: &Panel) -> Result<usize> {
    let n = panel.series.first().map(|s| s.1.len()).ok_or_else(|| OtError::InvalidInput("nothing to plot".into()))?;
    if n == 0 || panel.series.iter().any(|s| s.1.len() != n) {
        return Err(OtError::InvalidInput("histograms must be non-empty and of equal length".into()));
    }
    if panel.series.iter().any(|s| s.1.iter().any(|v| !v.is_finite())) {
        return Err(OtError::InvalidInput("histogram values must be finite".into()));
    }
    Ok(n)
}

/// Renders panels side by side on the fixed 800x400 canvas.
pub fn render_panels(panels: &[Panel]) -> Result<String> {
    if panels.is_empty() {
        return Err(OtError::InvalidInput("nothing to plot".into()));
    }
    let sizes = panels.iter().map(validate).collect::<Result<Vec<_>>>()?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let pw = WIDTH / panels.len() as f64;
    for (p, (panel, &n)) in panels.iter().zip(&sizes).enumerate() {
        let x0 = p as f64 * pw + 40.0;
        let plot_w = pw - 55.0;
        let (top, bottom) = (40.0, HEIGHT - 40.0);
        let vmax = panel.series.iter().flat_map(|s| s.1.iter()).cloned().fold(0.0, f64::max);
        let vmin = panel.series.iter().flat_map(|s| s.1.iter()).cloned().fold(0.0, f64::min);
        let span = if vmax - vmin > 0.0 { vmax - vmin } else { 1.0 };
        let y_of = |v: f64| bottom - (v - vmin) / span * (bottom - top);

        if !panel.title.is_empty() {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
                num(x0 + plot_w / 2.0),
                escape(&panel.title)
            );
        }
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{t}" x2="{x}" y2="{b}" stroke="black"/>"#,
            x = num(x0),
            t = num(top),
            b = num(bottom)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black"/>"#,
            num(x0),
            num(x0 + plot_w),
            y = num(y_of(0.0))
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            num(x0 - 4.0),
            num(top + 4.0),
            num(vmax)
        );

        let group = plot_w / n as f64;
        let k = panel.series.len();
        let bar = group * 0.8 / k as f64;
        for (s, (_, values)) in panel.series.iter().enumerate() {
            let color = PALETTE[s % PALETTE.len()];
            for (i, &v) in values.iter().enumerate() {
                let x = x0 + i as f64 * group + group * 0.1 + s as f64 * bar;
                let (ya, yb) = (y_of(v), y_of(0.0));
                let _ = writeln!(
                    out,
                    r#"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="{color}"/>"#,
                    num(x),
                    num(ya.min(yb)),
                    num(bar),
                    num((ya - yb).abs())
                );
            }
        }
        let step = (n as f64 / 10.0).ceil().max(1.0) as usize;
        for i in (0..n).step_by(step) {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle">{i}</text>"#,
                num(x0 + (i as f64 + 0.5) * group),
                num(bottom + 14.0)
            );
        }
        for (s, (label, _)) in panel.series.iter().enumerate() {
            let y = top + 4.0 + 14.0 * s as f64;
            let lx = x0 + plot_w - 90.0;
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                num(lx),
                num(y),
                PALETTE[s % PALETTE.len()],
                num(lx + 14.0),
                num(y + 9.0),
                escape(label)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes a single grouped-bar chart of `histograms` with a legend from `labels`.
/// Nothing is written when the input is rejected.
pub fn emit_svg_bars(histograms: &[Array1<f64>], labels: &[String], path: &Path) -> Result<()> {
    if histograms.len() != labels.len() {
        return Err(OtError::InvalidInput(format!("{} histograms but {} labels", histograms.len(), labels.len())));
    }
    let panel =
        Panel { title: String::new(), series: labels.iter().cloned().zip(histograms.iter().cloned()).collect() };
    emit_svg_panels(&[panel], path)
}

pub fn emit_svg_panels(panels: &[Panel], path: &Path) -> Result<()> {
    let svg = render_panels(panels)?;
    fs::write(path, svg).map_err(|e| OtError::Io(format!("{}: {e}", path.display())))
}
