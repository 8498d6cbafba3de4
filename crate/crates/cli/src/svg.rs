//! Minimal static SVG charts.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let (x1, y1) = (if x1 > x0 { x1 } else { x0 + 1.0 }, if y1 > y0 { y1 } else { y0 + 1.0 });
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, x_ticks: bool) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(out, r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let v = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let y = f.py(v);
        let _ = writeln!(out, r##"<line x1="{l}" y1="{y}" x2="{r}" y2="{y}" stroke="#ddd"/>"##);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, l - 6.0, y + 4.0, tick(v));
        if x_ticks {
            let xv = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
            let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, f.px(xv), b + 16.0, tick(xv));
        }
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 15.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let _ = writeln!(out, r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/>"#, y - 10.0, color(i));
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, x + 18.0, escape(name));
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// A bar series: name and one `(mean, half-width)` per group.
pub struct BarSeries {
    pub name: String,
    pub values: Vec<(f64, f64)>,
}

/// Grouped bars with error whiskers.
pub fn grouped_bars(title: &str, ylabel: &str, groups: &[String], series: &[BarSeries]) -> String {
    let top = series
        .iter()
        .flat_map(|s| s.values.iter().map(|(m, c)| m + c.max(0.0)))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let f = Frame::new(0.0, groups.len() as f64, 0.0, top * 1.1);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "category", ylabel, false);
    let slot = (f.px(1.0) - f.px(0.0)) * 0.8;
    let bar = slot / series.len().max(1) as f64;
    for (g, name) in groups.iter().enumerate() {
        let gx = f.px(g as f64) + 0.1 * (f.px(1.0) - f.px(0.0));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            gx + slot / 2.0,
            H - BOTTOM + 16.0,
            escape(name)
        );
        for (i, s) in series.iter().enumerate() {
            let Some(&(m, c)) = s.values.get(g) else { continue };
            if !m.is_finite() {
                continue;
            }
            let x = gx + bar * i as f64;
            let (y, y0) = (f.py(m), f.py(0.0));
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                bar * 0.9,
                y0 - y,
                color(i)
            );
            if c.is_finite() && c > 0.0 {
                let cx = x + bar * 0.45;
                let _ = writeln!(
                    out,
                    r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                    f.py(m - c),
                    f.py(m + c)
                );
            }
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// A polyline series.
pub struct Line {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with an optional shaded band `(x, lo, hi)`.
pub fn lines(title: &str, xlabel: &str, ylabel: &str, series: &[Line], band: Option<&[(f64, f64, f64)]>) -> String {
    let mut xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect::<Vec<_>>();
    let mut ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect::<Vec<_>>();
    if let Some(b) = band {
        xs.extend(b.iter().map(|p| p.0));
        ys.extend(b.iter().flat_map(|p| [p.1, p.2]));
    }
    let lo = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1, y0, y1) = (lo(&xs), hi(&xs), lo(&ys), hi(&ys));
    let (x0, x1) = if x0.is_finite() { (x0, x1) } else { (0.0, 1.0) };
    let (y0, y1) = if y0.is_finite() { (y0, y1) } else { (0.0, 1.0) };
    let pad = 0.05 * (y1 - y0).max(1e-12);
    let f = Frame::new(x0, x1, y0 - pad, y1 + pad);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel, true);
    if let Some(b) = band {
        let mut d = String::new();
        for (i, &(x, _, h)) in b.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, f.px(x), f.py(h));
        }
        for &(x, l, _) in b.iter().rev() {
            let _ = write!(d, "L{:.2},{:.2} ", f.px(x), f.py(l));
        }
        let _ = writeln!(out, r##"<path d="{d}Z" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##);
    }
    for (i, s) in series.iter().enumerate() {
        let mut d = String::new();
        for (k, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, f.px(x), f.py(y));
        }
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#, color(i));
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}
