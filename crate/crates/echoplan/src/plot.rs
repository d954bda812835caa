//! Static SVG charts: line charts, bar charts and trajectory overlays.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug)]
struct Bounds {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Bounds {
    fn of(series: &[Series], equal_aspect: bool) -> Self {
        let mut b = Bounds {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for (x, y) in series.iter().flat_map(|s| &s.points).filter(|(x, y)| x.is_finite() && y.is_finite()) {
            b.x0 = b.x0.min(*x);
            b.x1 = b.x1.max(*x);
            b.y0 = b.y0.min(*y);
            b.y1 = b.y1.max(*y);
        }
        if !b.x0.is_finite() {
            b = Bounds { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        }
        if b.x1 - b.x0 < 1e-12 {
            b.x0 -= 0.5;
            b.x1 += 0.5;
        }
        if b.y1 - b.y0 < 1e-12 {
            b.y0 -= 0.5;
            b.y1 += 0.5;
        }
        if equal_aspect {
            let sx = (b.x1 - b.x0) / (W - 2.0 * MARGIN);
            let sy = (b.y1 - b.y0) / (H - 2.0 * MARGIN);
            let s = sx.max(sy);
            let cx = 0.5 * (b.x0 + b.x1);
            let cy = 0.5 * (b.y0 + b.y1);
            b.x0 = cx - s * (W - 2.0 * MARGIN) / 2.0;
            b.x1 = cx + s * (W - 2.0 * MARGIN) / 2.0;
            b.y0 = cy - s * (H - 2.0 * MARGIN) / 2.0;
            b.y1 = cy + s * (H - 2.0 * MARGIN) / 2.0;
        }
        b
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(title: &str, xlabel: &str, ylabel: &str, b: &Bounds) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for (v, p) in [(b.x0, b.px(b.x0)), (b.x1, b.px(b.x1))] {
        let _ = writeln!(s, r#"<text x="{p:.1}" y="{}" text-anchor="middle">{v:.3}</text>"#, H - MARGIN + 14.0);
    }
    for (v, p) in [(b.y0, b.py(b.y0)), (b.y1, b.py(b.y1))] {
        let _ = writeln!(s, r#"<text x="{}" y="{p:.1}" text-anchor="end">{v:.3}</text>"#, MARGIN - 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    s
}

fn legend(s: &mut String, labels: &[&str]) {
    for (i, l) in labels.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64 + 10.0;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/>"#, W - MARGIN - 120.0, y - 9.0);
        let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, W - MARGIN - 106.0, escape(l));
    }
}

fn polylines(series: &[Series], b: &Bounds, markers: bool) -> String {
    let mut s = String::new();
    for (i, ser) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", b.px(*x), b.py(*y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        if markers {
            for (x, y) in ser.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{c}"/>"#, b.px(*x), b.py(*y));
            }
        }
    }
    s
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let b = Bounds::of(series, false);
    let mut s = frame(title, xlabel, ylabel, &b);
    s.push_str(&polylines(series, &b, false));
    legend(&mut s, &series.iter().map(|x| x.label.as_str()).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Trajectories in meters with equal axis scaling.
pub fn trajectory_overlay(title: &str, series: &[Series]) -> String {
    let b = Bounds::of(series, true);
    let mut s = frame(title, "x (m)", "y (m)", &b);
    s.push_str(&polylines(series, &b, true));
    legend(&mut s, &series.iter().map(|x| x.label.as_str()).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Grouped bars: one group per category, one bar per series value.
pub fn bar_chart(title: &str, ylabel: &str, categories: &[String], groups: &[(String, Vec<f64>)]) -> String {
    let max = groups
        .iter()
        .flat_map(|(_, v)| v)
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let b = Bounds {
        x0: 0.0,
        x1: categories.len().max(1) as f64,
        y0: 0.0,
        y1: max * 1.1,
    };
    let mut s = frame(title, "", ylabel, &b);
    let n = groups.len().max(1) as f64;
    for (ci, cat) in categories.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            b.px(ci as f64 + 0.5),
            H - MARGIN + 28.0,
            escape(cat)
        );
        for (gi, (_, vals)) in groups.iter().enumerate() {
            let v = vals.get(ci).copied().filter(|v| v.is_finite()).unwrap_or(0.0);
            let x = ci as f64 + 0.1 + 0.8 * gi as f64 / n;
            let w = b.px(x + 0.8 / n) - b.px(x);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                b.px(x),
                b.py(v),
                w,
                b.py(0.0) - b.py(v),
                PALETTE[gi % PALETTE.len()]
            );
        }
    }
    legend(&mut s, &groups.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}
