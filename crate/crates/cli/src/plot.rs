//! Self-contained SVG plots of numeric CSV columns.

use std::f64::consts::PI;
use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 52.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Debug, Default)]
pub struct PlotSpec {
    pub x: String,
    pub ys: Vec<String>,
    pub logx: bool,
    pub logy: bool,
    pub scatter: bool,
    /// Histogram of this column instead of `y` against `x`.
    pub hist: Option<String>,
    pub weight: Option<String>,
    pub bins: usize,
    /// Overlay `(π/2) sin(πv)` on `[0, 1]`.
    pub sine: bool,
    pub title: Option<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PlotError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0, log };
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
            if hi <= lo {
                hi = lo + 1.0;
            }
        } else if hi <= lo {
            lo -= 0.5;
            hi += 0.5;
        } else {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    /// Maps a data value (already in log10 units on a log axis) to `[0, 1]`.
    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0);
            let mut out = Vec::new();
            let mut k = self.lo.ceil();
            while k <= self.hi + 1e-9 {
                out.push((k, format!("1e{}", k as i64)));
                k += step;
            }
            return out;
        }
        let raw = (self.hi - self.lo) / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let mut out = Vec::new();
        let mut k = (self.lo / step).ceil();
        while k * step <= self.hi + 1e-9 * step {
            let v = k * step;
            out.push((v, fmt_tick(if v.abs() < 1e-12 * step { 0.0 } else { v })));
            k += 1.0;
        }
        out
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn column<'a>(header: &[String], cols: &'a [Vec<f64>], name: &str) -> Result<&'a [f64], PlotError> {
    header
        .iter()
        .position(|h| h == name)
        .map(|i| cols[i].as_slice())
        .ok_or_else(|| PlotError::MissingColumn(name.to_string()))
}

fn to_axis(v: f64, log: bool) -> f64 {
    if !log {
        v
    } else if v > 0.0 {
        v.log10()
    } else {
        f64::NAN
    }
}

enum Mark {
    Series { name: String, pts: Vec<(f64, f64)> },
    Bars { edges: Vec<f64>, heights: Vec<f64> },
    Curve { name: String, pts: Vec<(f64, f64)> },
}

/// Renders `spec` over a parsed CSV. An empty CSV (no header) yields empty
/// axes; otherwise every named column must exist.
pub fn render(header: &[String], cols: &[Vec<f64>], spec: &PlotSpec) -> Result<String, PlotError> {
    let mut marks = Vec::new();
    let empty = header.is_empty();
    let (xlabel, ylabel);
    if let Some(hc) = &spec.hist {
        xlabel = hc.clone();
        ylabel = "density".to_string();
        if !empty {
            let v = column(header, cols, hc)?;
            let w = match &spec.weight {
                Some(c) => column(header, cols, c)?.to_vec(),
                None => vec![1.0; v.len()],
            };
            marks.push(histogram(v, &w, spec.bins.max(1), spec.sine));
        }
        if spec.sine {
            let pts = (0..=200).map(|i| i as f64 / 200.0).map(|v| (v, 0.5 * PI * (PI * v).sin())).collect();
            marks.push(Mark::Curve { name: "(pi/2) sin(pi v)".into(), pts });
        }
    } else {
        xlabel = spec.x.clone();
        ylabel = spec.ys.join(", ");
        if !empty {
            let x = column(header, cols, &spec.x)?;
            for y in &spec.ys {
                let yv = column(header, cols, y)?;
                let pts = x
                    .iter()
                    .zip(yv)
                    .map(|(&a, &b)| (to_axis(a, spec.logx), to_axis(b, spec.logy)))
                    .filter(|(a, b)| a.is_finite() && b.is_finite())
                    .collect();
                marks.push(Mark::Series { name: y.clone(), pts });
            }
        }
    }

    let xs = marks.iter().flat_map(|m| match m {
        Mark::Series { pts, .. } | Mark::Curve { pts, .. } => pts.iter().map(|p| p.0).collect::<Vec<_>>(),
        Mark::Bars { edges, .. } => edges.clone(),
    });
    let xaxis = Axis::fit(xs.collect::<Vec<_>>().into_iter(), spec.logx && spec.hist.is_none());
    let ys = marks.iter().flat_map(|m| match m {
        Mark::Series { pts, .. } | Mark::Curve { pts, .. } => pts.iter().map(|p| p.1).collect::<Vec<_>>(),
        Mark::Bars { heights, .. } => heights.iter().copied().chain([0.0]).collect(),
    });
    let yaxis = Axis::fit(ys.collect::<Vec<_>>().into_iter(), spec.logy && spec.hist.is_none());

    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |v: f64| LEFT + xaxis.frac(v) * pw;
    let py = |v: f64| TOP + (1.0 - yaxis.frac(v)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    if let Some(t) = &spec.title {
        let _ = writeln!(s, r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(t));
    }
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for (v, label) in xaxis.ticks() {
        let x = px(v);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0);
    }
    for (v, label) in yaxis.ticks() {
        let y = py(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, esc(&axis_label(&xlabel, xaxis.log)));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(&axis_label(&ylabel, yaxis.log))
    );

    let mut legend = Vec::new();
    for (i, m) in marks.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        match m {
            Mark::Bars { edges, heights } => {
                for (k, &h) in heights.iter().enumerate() {
                    let (x0, x1) = (px(edges[k]), px(edges[k + 1]));
                    let (y0, y1) = (py(h), py(0.0));
                    let _ = writeln!(s, r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#3182bd"/>"##, x1 - x0, y1 - y0);
                }
            }
            Mark::Series { name, pts } | Mark::Curve { name, pts } => {
                legend.push((name.clone(), c));
                if spec.scatter && matches!(m, Mark::Series { .. }) {
                    for &(a, b) in pts {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{c}"/>"#, px(a), py(b));
                    }
                } else if !pts.is_empty() {
                    let d: Vec<String> = pts.iter().map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
                    let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, d.join(" "));
                }
            }
        }
    }
    for (i, (name, c)) in legend.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * i as f64;
        let x = LEFT + pw - 150.0;
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{c}" stroke-width="2"/>"#, x + 18.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 24.0, y + 4.0, esc(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn axis_label(name: &str, log: bool) -> String {
    if log {
        format!("{name} (log10)")
    } else {
        name.to_string()
    }
}

fn histogram(v: &[f64], w: &[f64], bins: usize, unit: bool) -> Mark {
    let finite = v.iter().zip(w).filter(|(a, b)| a.is_finite() && b.is_finite());
    let (lo, hi) = if unit {
        (0.0, 1.0)
    } else {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (a, _) in finite.clone() {
            lo = lo.min(*a);
            hi = hi.max(*a);
        }
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi <= lo {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let width = (hi - lo) / bins as f64;
    let mut mass = vec![0.0; bins];
    let mut total = 0.0;
    for (a, b) in finite {
        if *a < lo || *a > hi {
            continue;
        }
        let k = (((a - lo) / width) as usize).min(bins - 1);
        mass[k] += b;
        total += b;
    }
    let heights = mass.iter().map(|m| if total > 0.0 { m / (total * width) } else { 0.0 }).collect();
    let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
    Mark::Bars { edges, heights }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
