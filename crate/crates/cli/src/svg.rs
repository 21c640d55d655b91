//! Minimal SVG line plots and heatmaps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Axis {
    pub label: String,
    pub log: bool,
}

impl Axis {
    pub fn linear(label: &str) -> Self {
        Axis { label: label.into(), log: false }
    }

    pub fn log(label: &str) -> Self {
        Axis { label: label.into(), log: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points, style: Style::Line }
    }

    pub fn markers(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points, style: Style::Markers }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Round tick positions covering `[lo, hi]`.
fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Scale {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Scale {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.04 * (hi - lo);
        Scale { lo: lo - pad, hi: hi + pad, log }
    }

    fn frac(&self, v: f64) -> Option<f64> {
        let v = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let mut t: Vec<(f64, String)> = (self.lo.ceil() as i64..=self.hi.floor() as i64)
                .map(|e| (e as f64, format!("1e{e}")))
                .collect();
            if t.len() < 2 {
                t = linear_ticks(self.lo, self.hi)
                    .into_iter()
                    .map(|e| (e, fmt_tick(10f64.powf(e))))
                    .collect();
            }
            t
        } else {
            linear_ticks(self.lo, self.hi).into_iter().map(|v| (v, fmt_tick(v))).collect()
        }
    }

    fn pos(&self, scaled: f64) -> f64 {
        (scaled - self.lo) / (self.hi - self.lo)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
}

fn frame(out: &mut String, xs: &Scale, ys: &Scale, xa: &Axis, ya: &Axis) {
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for (v, label) in xs.ticks() {
        let x = LEFT + xs.pos(v) * pw;
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0);
    }
    for (v, label) in ys.ticks() {
        let y = TOP + (1.0 - ys.pos(v)) * ph;
        let _ = writeln!(out, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 16.0, esc(&xa.label));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        esc(&ya.label)
    );
}

/// Line/marker plot; `hlines` are dashed horizontal references.
pub fn line_plot(title: &str, xa: &Axis, ya: &Axis, series: &[Series], hlines: &[(f64, String)]) -> String {
    let xs = Scale::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), xa.log);
    let ys = Scale::fit(
        series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(hlines.iter().map(|h| h.0)),
        ya.log,
    );
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let map = |p: &(f64, f64)| -> Option<(f64, f64)> {
        Some((LEFT + xs.frac(p.0)? * pw, TOP + (1.0 - ys.frac(p.1)?) * ph))
    };
    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out, &xs, &ys, xa, ya);
    for (v, label) in hlines {
        if let Some(f) = ys.frac(*v) {
            let y = TOP + (1.0 - f) * ph;
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#555" stroke-dasharray="6 4"/>"##,
                LEFT + pw
            );
            let _ = writeln!(out, r##"<text x="{}" y="{:.2}" fill="#555">{}</text>"##, LEFT + pw - 4.0, y - 4.0, esc(label));
        }
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().filter_map(map).collect();
        match s.style {
            Style::Line => {
                let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, d.join(" "));
            }
            Style::Markers => {
                for (x, y) in &pts {
                    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
                }
            }
        }
        let ly = TOP + 10.0 + 16.0 * i as f64;
        let lx = W - RIGHT + 10.0;
        let _ = writeln!(out, r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{color}"/>"#, ly - 9.0);
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 14.0, esc(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

fn viridis(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let c = |u: f64, v: f64| (u + f * (v - u)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(a.0, b.0), c(a.1, b.1), c(a.2, b.2))
}

/// Heatmap of `values[i][j]` over `xs[i]`, `ys[j]` on a log color scale.
/// Markers are drawn as labelled crosses.
pub fn heatmap(
    title: &str,
    xa: &Axis,
    ya: &Axis,
    xs: &[f64],
    ys: &[f64],
    values: &[Vec<f64>],
    markers: &[(f64, f64, String)],
) -> String {
    let dx = if xs.len() > 1 { xs[1] - xs[0] } else { 1.0 };
    let dy = if ys.len() > 1 { ys[1] - ys[0] } else { 1.0 };
    let xsc = Scale {
        lo: xs.first().copied().unwrap_or(0.0) - dx / 2.0,
        hi: xs.last().copied().unwrap_or(1.0) + dx / 2.0,
        log: false,
    };
    let ysc = Scale {
        lo: ys.first().copied().unwrap_or(0.0) - dy / 2.0,
        hi: ys.last().copied().unwrap_or(1.0) + dy / 2.0,
        log: false,
    };
    let logs: Vec<f64> = values.iter().flatten().filter(|v| v.is_finite() && **v > 0.0).map(|v| v.log10()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi - lo > 1e-12 { hi - lo } else { 1.0 };
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let cw = pw * dx / (xsc.hi - xsc.lo);
    let ch = ph * dy / (ysc.hi - ysc.lo);

    let mut out = String::new();
    header(&mut out, title);
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let v = values[i][j];
            let fill = if v.is_finite() && v > 0.0 { viridis((v.log10() - lo) / span) } else { "#cccccc".into() };
            let px = LEFT + xsc.pos(x) * pw - cw / 2.0;
            let py = TOP + (1.0 - ysc.pos(y)) * ph - ch / 2.0;
            let _ = writeln!(out, r#"<rect x="{px:.2}" y="{py:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#, cw + 0.3, ch + 0.3);
        }
    }
    frame(&mut out, &xsc, &ysc, xa, ya);
    for (x, y, label) in markers {
        let px = LEFT + xsc.pos(*x) * pw;
        let py = TOP + (1.0 - ysc.pos(*y)) * ph;
        let _ = writeln!(
            out,
            r#"<path d="M{0:.2},{1:.2}l6,6m-6,-6l-6,6m6,-6l6,-6m-6,6l-6,-6" stroke="white" stroke-width="2"/>"#,
            px, py
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" fill="white">{}</text>"#, px + 8.0, py - 6.0, esc(label));
    }
    let bx = W - RIGHT + 20.0;
    for s in 0..50 {
        let t = s as f64 / 49.0;
        let y = TOP + (1.0 - t) * ph * 0.8;
        let _ = writeln!(out, r#"<rect x="{bx}" y="{y:.2}" width="16" height="{:.2}" fill="{}"/>"#, ph * 0.8 / 49.0 + 0.3, viridis(t));
    }
    if lo.is_finite() {
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, bx + 20.0, TOP + 8.0, fmt_tick(10f64.powf(hi)));
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, bx + 20.0, TOP + ph * 0.8, fmt_tick(10f64.powf(lo)));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(linear_ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(fmt_tick(0.25), "0.25");
        assert_eq!(fmt_tick(2e-5), "2e-5");
    }

    #[test]
    fn plots_are_well_formed() {
        let s = line_plot(
            "n <def>",
            &Axis::log("tau"),
            &Axis::log("n"),
            &[Series::markers("a", vec![(1.0, 0.1), (10.0, 0.03)]), Series::line("fit", vec![(1.0, 0.1), (10.0, 0.0)])],
            &[(0.01, "floor".into())],
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("n &lt;def&gt;"));
        assert_eq!(s.matches("<circle").count(), 2);

        let h = heatmap(
            "rmse",
            &Axis::linear("a"),
            &Axis::linear("b"),
            &[0.1, 0.2],
            &[0.1, 0.2, 0.3],
            &[vec![1e-3, 1e-2, f64::NAN], vec![1e-4, 1.0, 0.5]],
            &[(0.1, 0.2, "QKZ".into())],
        );
        assert!(h.contains("#cccccc") && h.contains("QKZ"));
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(viridis(0.0), "#440154");
        assert_eq!(viridis(1.0), "#fde725");
    }
}
