//! Plot-ready curve files and a minimal SVG line chart.

use std::fmt::Write as _;

use irslab::train::EpochMetrics;

pub const MOVING_AVERAGE_WINDOW: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Curve {
    Reward,
    Rate,
    Satisfaction,
}

impl Curve {
    pub fn name(self) -> &'static str {
        match self {
            Curve::Reward => "reward",
            Curve::Rate => "rate",
            Curve::Satisfaction => "satisfaction",
        }
    }

    pub fn value(self, m: &EpochMetrics) -> f64 {
        match self {
            Curve::Reward => m.mean_reward,
            Curve::Rate => m.mean_rate,
            Curve::Satisfaction => m.satisfaction_rate,
        }
    }
}

/// Trailing mean over up to `window` points; early points average what exists.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        sum += x;
        if i >= w {
            sum -= xs[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

pub fn two_column(epochs: &[usize], values: &[f64]) -> String {
    let mut s = String::from("epoch,value\n");
    for (e, v) in epochs.iter().zip(values) {
        let _ = writeln!(s, "{e},{v}");
    }
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One polyline per series on shared axes.
pub fn svg_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let points = series.iter().flat_map(|(_, p)| p.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} L{pad} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(s, r#"<text x="{pad}" y="{}" font-size="10">{x0}</text>"#, h - pad + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{x1}</text>"#, w - pad, h - pad + 15.0);
    let _ = writeln!(s, r#"<text x="5" y="{}" font-size="10">{y0:.3}</text>"#, h - pad);
    let _ = writeln!(s, r#"<text x="5" y="{pad}" font-size="10">{y1:.3}</text>"#);
    for (i, (label, pts)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{}</text>"#,
            w - pad - 120.0,
            pad + 14.0 * i as f64,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
