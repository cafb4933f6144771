//! Static SVG rendering of plot data, and conversion to other image formats
//! through an external command.
//!
//! Output depends only on the spec and the data: coordinates are written
//! with two decimals and element ids are fixed, so identical input gives
//! identical bytes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::process::{Command, Stdio};

use super::{IntervalData, PairsData, PlotData, PlotError, PlotSpec, Quantity, Theme};

struct Style {
    background: &'static str,
    foreground: &'static str,
    grid: &'static str,
    panel: &'static str,
    palette: [&'static str; 8],
    low: (u8, u8, u8),
    high: (u8, u8, u8),
}

fn style(theme: Theme) -> Style {
    match theme {
        Theme::Default => Style {
            background: "#ffffff",
            foreground: "#222222",
            grid: "#dddddd",
            panel: "#f4f4f4",
            palette: [
                "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d",
                "#666666",
            ],
            low: (0xf7, 0xfb, 0xff),
            high: (0x08, 0x30, 0x6b),
        },
        Theme::Minimal => Style {
            background: "#ffffff",
            foreground: "#333333",
            grid: "#eeeeee",
            panel: "#ffffff",
            palette: [
                "#000000", "#555555", "#888888", "#aaaaaa", "#3366cc", "#cc3333", "#339933",
                "#996699",
            ],
            low: (0xff, 0xff, 0xff),
            high: (0x33, 0x33, 0x33),
        },
        Theme::Dark => Style {
            background: "#1e1e1e",
            foreground: "#e8e8e8",
            grid: "#3a3a3a",
            panel: "#262626",
            palette: [
                "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69",
                "#fccde5",
            ],
            low: (0x26, 0x26, 0x26),
            high: (0xfd, 0xb4, 0x62),
        },
    }
}

pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Coordinate text with two decimals and no negative zero.
fn n(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Tick label: up to four significant figures, trailing zeros removed.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let places = crate::export::decimal_places(v, 4);
    let s = format!("{v:.places$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.0 {
        2.0
    } else if f < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 5);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Padded numeric domain over the given values.
fn domain(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 0.0 {
        let pad = lo.abs().max(1.0) * 0.1;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        self.left + (v - self.x.0) / (self.x.1 - self.x.0) * (self.right - self.left)
    }

    fn py(&self, v: f64) -> f64 {
        self.bottom - (v - self.y.0) / (self.y.1 - self.y.0) * (self.bottom - self.top)
    }
}

struct Canvas {
    out: String,
    width: f64,
    height: f64,
    style: Style,
}

impl Canvas {
    fn new(spec: &PlotSpec) -> Self {
        let st = style(spec.theme);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="Helvetica, Arial, sans-serif" font-size="12">
<rect x="0" y="0" width="{w}" height="{h}" fill="{bg}"/>"#,
            w = n(spec.width),
            h = n(spec.height),
            bg = st.background
        );
        Canvas {
            out,
            width: spec.width,
            height: spec.height,
            style: st,
        }
    }

    fn frame(&self, x: (f64, f64), y: (f64, f64), left: f64) -> Frame {
        Frame {
            left,
            right: self.width - 130.0,
            top: 40.0,
            bottom: self.height - 50.0,
            x,
            y,
        }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, extra: &str, s: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{}" y="{}" text-anchor="{anchor}" fill="{}"{extra}>{}</text>"#,
            n(x),
            n(y),
            self.style.foreground,
            escape_xml(s)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, extra: &str) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}"{extra}/>"#,
            n(x1),
            n(y1),
            n(x2),
            n(y2)
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str, extra: &str) {
        let _ = writeln!(
            self.out,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}"{extra}/>"#,
            n(x),
            n(y),
            n(r)
        );
    }

    fn raw(&mut self, s: &str) {
        self.out.push_str(s);
        self.out.push('\n');
    }

    /// Panel background, grid lines, numeric ticks on the requested axes.
    fn axes(&mut self, f: &Frame, x_numeric: bool, y_numeric: bool) {
        let _ = writeln!(
            self.out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}" stroke="{}"/>"#,
            n(f.left),
            n(f.top),
            n(f.right - f.left),
            n(f.bottom - f.top),
            self.style.panel,
            self.style.grid
        );
        let grid = self.style.grid;
        if x_numeric {
            for t in ticks(f.x.0, f.x.1) {
                let x = f.px(t);
                self.line(x, f.top, x, f.bottom, grid, "");
                self.text(x, f.bottom + 16.0, "middle", "", &tick_label(t));
            }
        }
        if y_numeric {
            for t in ticks(f.y.0, f.y.1) {
                let y = f.py(t);
                self.line(f.left, y, f.right, y, grid, "");
                self.text(f.left - 6.0, y + 4.0, "end", "", &tick_label(t));
            }
        }
    }

    fn labels(&mut self, f: &Frame, title: Option<&str>, xlab: &str, ylab: &str) {
        if let Some(t) = title {
            self.text(self.width / 2.0, 24.0, "middle", r#" font-size="15""#, t);
        }
        self.text(
            (f.left + f.right) / 2.0,
            self.height - 12.0,
            "middle",
            "",
            xlab,
        );
        let (x, y) = (16.0, (f.top + f.bottom) / 2.0);
        let rot = format!(r#" transform="rotate(-90 {} {})""#, n(x), n(y));
        self.text(x, y, "middle", &rot, ylab);
    }

    fn legend(&mut self, entries: &[(String, &'static str)]) {
        if entries.len() < 2 {
            return;
        }
        let x = self.width - 120.0;
        for (i, (label, colour)) in entries.iter().enumerate() {
            let y = 50.0 + 18.0 * i as f64;
            let _ = writeln!(
                self.out,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{colour}"/>"#,
                n(x),
                n(y - 9.0)
            );
            self.text(x + 16.0, y, "start", "", label);
        }
    }

    fn finish(mut self) -> Vec<u8> {
        self.out.push_str("</svg>\n");
        self.out.into_bytes()
    }
}

fn quantity_name(q: Quantity) -> &'static str {
    match q {
        Quantity::Estimate => "estimate",
        Quantity::Se => "standard error",
    }
}

fn render_pairs(c: &mut Canvas, spec: &PlotSpec, p: &PairsData, faint: bool) {
    let pts = || p.groups.iter().flat_map(|g| g.points.iter());
    let (lo, hi) = domain(pts().flat_map(|q| [q.a, q.b]));
    let f = c.frame((lo, hi), (lo, hi), 70.0);
    c.axes(&f, true, true);
    let fg = c.style.foreground;
    c.line(
        f.px(lo),
        f.py(lo),
        f.px(hi),
        f.py(hi),
        fg,
        r#" stroke-dasharray="4 3""#,
    );
    let opacity = if faint {
        r#" fill-opacity="0.25""#
    } else {
        r#" fill-opacity="0.7""#
    };
    let mut legend = Vec::new();
    for (i, g) in p.groups.iter().enumerate() {
        let colour = c.style.palette[i % 8];
        legend.push((format!("DGM {}", g.dgm_label), colour));
        for q in &g.points {
            c.circle(f.px(q.a), f.py(q.b), 2.0, colour, opacity);
        }
    }
    c.legend(&legend);
    let q = quantity_name(p.quantity);
    let xlab = spec
        .xlab
        .clone()
        .unwrap_or(format!("{q}, method {}", p.method_a));
    let ylab = spec
        .ylab
        .clone()
        .unwrap_or(format!("{q}, method {}", p.method_b));
    c.labels(&f, spec.title.as_deref(), &xlab, &ylab);
}

fn render_intervals(c: &mut Canvas, spec: &PlotSpec, d: &IntervalData, lolly: bool) {
    let rows = d.items.len() as f64;
    let mut xs: Vec<f64> = d.items.iter().flat_map(|i| [i.lower, i.upper]).collect();
    if lolly {
        xs.push(0.0);
    }
    let f = c.frame(domain(xs), (0.0, rows), 150.0);
    c.axes(&f, true, false);
    let fg = c.style.foreground;
    if f.x.0 < 0.0 && f.x.1 > 0.0 {
        c.line(
            f.px(0.0),
            f.top,
            f.px(0.0),
            f.bottom,
            fg,
            r#" stroke-dasharray="2 2""#,
        );
    }
    let mut dgms: Vec<&str> = d.items.iter().map(|i| i.dgm_label.as_str()).collect();
    dgms.dedup();
    for (k, it) in d.items.iter().enumerate() {
        let y = f.py(rows - k as f64 - 0.5);
        let colour = c.style.palette[dgms.iter().position(|x| *x == it.dgm_label).unwrap_or(0) % 8];
        c.raw(&format!(
            r#"<g class="marker" data-method="{}" data-dgm="{}">"#,
            escape_xml(&it.method),
            escape_xml(&it.dgm_label)
        ));
        if lolly {
            c.line(
                f.px(0.0),
                y,
                f.px(it.value),
                y,
                colour,
                r#" stroke-width="2""#,
            );
            c.line(f.px(it.lower), y - 4.0, f.px(it.lower), y + 4.0, colour, "");
            c.line(f.px(it.upper), y - 4.0, f.px(it.upper), y + 4.0, colour, "");
        } else {
            c.line(
                f.px(it.lower),
                y,
                f.px(it.upper),
                y,
                colour,
                r#" stroke-width="2""#,
            );
        }
        c.circle(f.px(it.value), y, 4.0, colour, "");
        c.raw("</g>");
        let label = if dgms.len() > 1 {
            format!("{} (DGM {})", it.method, it.dgm_label)
        } else {
            it.method.clone()
        };
        c.text(f.left - 6.0, y + 4.0, "end", "", &label);
    }
    let xlab = spec.xlab.clone().unwrap_or(d.measure.label(0.05));
    let ylab = spec.ylab.clone().unwrap_or("Method".into());
    c.labels(&f, spec.title.as_deref(), &xlab, &ylab);
}

fn lerp_colour(lo: (u8, u8, u8), hi: (u8, u8, u8), t: f64) -> String {
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(lo.0, hi.0),
        mix(lo.1, hi.1),
        mix(lo.2, hi.2)
    )
}

fn render(c: &mut Canvas, spec: &PlotSpec, data: &PlotData) {
    match data {
        PlotData::Scatter(p) => render_pairs(c, spec, p, false),
        PlotData::DensityPairs(p) => render_pairs(c, spec, p, true),
        PlotData::BlandAltman(b) => {
            let pts = || b.groups.iter().flat_map(|g| g.points.iter());
            let mut ys: Vec<f64> = pts().map(|p| p.diff).collect();
            for g in &b.groups {
                ys.extend([g.lower_limit, g.upper_limit].into_iter().flatten());
            }
            let f = c.frame(domain(pts().map(|p| p.mean)), domain(ys), 70.0);
            c.axes(&f, true, true);
            let mut legend = Vec::new();
            for (i, g) in b.groups.iter().enumerate() {
                let colour = c.style.palette[i % 8];
                legend.push((format!("DGM {}", g.dgm_label), colour));
                for p in &g.points {
                    c.circle(
                        f.px(p.mean),
                        f.py(p.diff),
                        2.0,
                        colour,
                        r#" fill-opacity="0.7""#,
                    );
                }
                c.line(
                    f.left,
                    f.py(g.mean_diff),
                    f.right,
                    f.py(g.mean_diff),
                    colour,
                    "",
                );
                for lim in [g.lower_limit, g.upper_limit].into_iter().flatten() {
                    c.line(
                        f.left,
                        f.py(lim),
                        f.right,
                        f.py(lim),
                        colour,
                        r#" stroke-dasharray="4 3""#,
                    );
                }
            }
            c.legend(&legend);
            let xlab = spec
                .xlab
                .clone()
                .unwrap_or(format!("Mean of methods {} and {}", b.method_a, b.method_b));
            let ylab = spec
                .ylab
                .clone()
                .unwrap_or(format!("Difference, {} minus {}", b.method_a, b.method_b));
            c.labels(&f, spec.title.as_deref(), &xlab, &ylab);
        }
        PlotData::Ridgeline { quantity, groups } => {
            let rows = groups.len() as f64;
            let xs = groups.iter().flat_map(|g| {
                g.sample
                    .iter()
                    .copied()
                    .chain(g.density.iter().flat_map(|d| d.x.iter().copied()))
            });
            let f = c.frame(domain(xs), (0.0, rows), 150.0);
            c.axes(&f, true, false);
            let peak = groups
                .iter()
                .filter_map(|g| g.density.as_ref())
                .flat_map(|d| d.y.iter().copied())
                .fold(0.0f64, f64::max);
            for (k, g) in groups.iter().enumerate() {
                let base = rows - k as f64 - 1.0;
                let colour = c.style.palette[k % 8];
                c.raw(&format!(
                    r#"<g class="ridge" data-method="{}">"#,
                    escape_xml(&g.method)
                ));
                if let (Some(d), true) = (&g.density, peak > 0.0) {
                    let mut path = format!("M{},{}", n(f.px(d.x[0])), n(f.py(base)));
                    for (x, y) in d.x.iter().zip(&d.y) {
                        let _ =
                            write!(path, " L{},{}", n(f.px(*x)), n(f.py(base + 0.9 * y / peak)));
                    }
                    let _ = write!(
                        path,
                        " L{},{} Z",
                        n(f.px(d.x[d.x.len() - 1])),
                        n(f.py(base))
                    );
                    c.raw(&format!(
                        r#"<path d="{path}" fill="{colour}" fill-opacity="0.6" stroke="{colour}"/>"#
                    ));
                }
                for s in &g.sample {
                    let y = f.py(base);
                    c.line(f.px(*s), y, f.px(*s), y - 4.0, colour, "");
                }
                c.raw("</g>");
                c.text(
                    f.left - 6.0,
                    f.py(base + 0.3),
                    "end",
                    "",
                    &format!("{} (DGM {})", g.method, g.dgm_label),
                );
            }
            let xlab = spec
                .xlab
                .clone()
                .unwrap_or(quantity_name(*quantity).to_string());
            let ylab = spec.ylab.clone().unwrap_or("Method".into());
            c.labels(&f, spec.title.as_deref(), &xlab, &ylab);
        }
        PlotData::Forest(d) => render_intervals(c, spec, d, false),
        PlotData::Lolly(d) => render_intervals(c, spec, d, true),
        PlotData::Heat(h) => {
            let mut methods: Vec<&str> = Vec::new();
            let mut dgms: Vec<&str> = Vec::new();
            for t in &h.tiles {
                if !methods.contains(&t.method.as_str()) {
                    methods.push(&t.method);
                }
                if !dgms.contains(&t.dgm_label.as_str()) {
                    dgms.push(&t.dgm_label);
                }
            }
            let f = c.frame((0.0, methods.len() as f64), (0.0, dgms.len() as f64), 90.0);
            c.axes(&f, false, false);
            let (lo, hi) = h
                .tiles
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| {
                    (a.min(t.value), b.max(t.value))
                });
            let (cw, ch) = (
                (f.right - f.left) / methods.len() as f64,
                (f.bottom - f.top) / dgms.len() as f64,
            );
            for t in &h.tiles {
                let i = methods.iter().position(|m| *m == t.method).expect("listed");
                let j = dgms.iter().position(|d| *d == t.dgm_label).expect("listed");
                let share = if hi > lo {
                    (t.value - lo) / (hi - lo)
                } else {
                    0.5
                };
                let fill = lerp_colour(c.style.low, c.style.high, share);
                let (x, y) = (f.left + i as f64 * cw, f.bottom - (j + 1) as f64 * ch);
                c.raw(&format!(
                    r#"<rect class="tile" x="{}" y="{}" width="{}" height="{}" fill="{fill}" stroke="{}"/>"#,
                    n(x),
                    n(y),
                    n(cw),
                    n(ch),
                    c.style.background
                ));
                let txt = if share > 0.5 { "#ffffff" } else { "#000000" };
                let _ = writeln!(
                    c.out,
                    r#"<text x="{}" y="{}" text-anchor="middle" fill="{txt}">{}</text>"#,
                    n(x + cw / 2.0),
                    n(y + ch / 2.0 + 4.0),
                    escape_xml(&tick_label(t.value))
                );
            }
            for (i, m) in methods.iter().enumerate() {
                c.text(
                    f.left + (i as f64 + 0.5) * cw,
                    f.bottom + 16.0,
                    "middle",
                    "",
                    m,
                );
            }
            for (j, d) in dgms.iter().enumerate() {
                c.text(
                    f.left - 6.0,
                    f.bottom - (j as f64 + 0.5) * ch + 4.0,
                    "end",
                    "",
                    d,
                );
            }
            let xlab = spec.xlab.clone().unwrap_or("Method".into());
            let ylab = spec.ylab.clone().unwrap_or("DGM".into());
            let title = spec.title.clone().or(Some(h.measure.label(0.05)));
            c.labels(&f, title.as_deref(), &xlab, &ylab);
        }
        PlotData::Zip(z) => {
            let panels = z.strata.len().max(1) as f64;
            let xs = z.stripes.iter().flat_map(|s| [s.lower, s.upper, s.truth]);
            let (lo, hi) = domain(xs);
            let outer = c.frame((0.0, 1.0), (0.0, 100.0), 60.0);
            let pw = (outer.right - outer.left) / panels;
            for (k, st) in z.strata.iter().enumerate() {
                let mut f = c.frame((lo, hi), (0.0, 100.0), outer.left + k as f64 * pw);
                f.right = f.left + pw - 8.0;
                c.axes(&f, true, k == 0);
                let (hit, miss) = (c.style.palette[0], c.style.palette[1]);
                for s in z
                    .stripes
                    .iter()
                    .filter(|s| s.method == st.method && s.dgm == st.dgm)
                {
                    let y = f.py(s.rank_percentile);
                    c.line(
                        f.px(s.lower),
                        y,
                        f.px(s.upper),
                        y,
                        if s.covers { hit } else { miss },
                        "",
                    );
                }
                if let Some(t) = z
                    .stripes
                    .iter()
                    .find(|s| s.method == st.method && s.dgm == st.dgm)
                    .map(|s| s.truth)
                {
                    let fg = c.style.foreground;
                    c.line(f.px(t), f.top, f.px(t), f.bottom, fg, "");
                }
                let y95 = f.py(100.0 * (1.0 - st.coverage));
                let fg = c.style.foreground;
                c.line(f.left, y95, f.right, y95, fg, r#" stroke-dasharray="4 3""#);
                c.text(
                    (f.left + f.right) / 2.0,
                    f.top - 6.0,
                    "middle",
                    "",
                    &format!("{} (DGM {})", st.method, st.dgm_label),
                );
            }
            let xlab = spec.xlab.clone().unwrap_or("Confidence interval".into());
            let ylab = spec.ylab.clone().unwrap_or("Centile of ranked |z|".into());
            let full = c.frame((0.0, 1.0), (0.0, 1.0), 60.0);
            c.labels(&full, spec.title.as_deref(), &xlab, &ylab);
        }
        PlotData::NestedLoop(nl) => {
            let p = nl.dgm_order.len();
            let ys = nl
                .value_steps
                .iter()
                .flat_map(|s| s.values.iter().flatten().copied())
                .chain(
                    nl.factor_ribbons
                        .iter()
                        .flat_map(|r| r.values.iter().copied()),
                );
            let f = c.frame((0.0, p as f64), domain(ys), 70.0);
            c.axes(&f, false, true);
            let step_path = |vals: &[Option<f64>]| {
                let mut d = String::new();
                let mut open = false;
                for (i, v) in vals.iter().enumerate() {
                    match v {
                        Some(v) => {
                            let cmd = if open { 'L' } else { 'M' };
                            let _ = write!(
                                d,
                                "{cmd}{},{} L{},{} ",
                                n(f.px(i as f64)),
                                n(f.py(*v)),
                                n(f.px(i as f64 + 1.0)),
                                n(f.py(*v))
                            );
                            open = true;
                        }
                        None => open = false,
                    }
                }
                d.trim_end().to_string()
            };
            let fg = c.style.foreground;
            for r in &nl.factor_ribbons {
                let vals: Vec<Option<f64>> = r.values.iter().copied().map(Some).collect();
                c.raw(&format!(
                    r#"<path class="ribbon" d="{}" fill="none" stroke="{fg}" stroke-width="1"/>"#,
                    step_path(&vals)
                ));
                let y = f.py(r.values[0]);
                c.text(
                    f.left + 4.0,
                    y - 3.0,
                    "start",
                    r#" font-size="10""#,
                    &format!("{}: {}", r.factor, r.levels.join(", ")),
                );
            }
            let mut legend = Vec::new();
            for (k, s) in nl.value_steps.iter().enumerate() {
                let colour = c.style.palette[k % 8];
                legend.push((s.method.clone(), colour));
                c.raw(&format!(
                    r#"<path class="series" d="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
                    step_path(&s.values)
                ));
            }
            c.legend(&legend);
            let xlab = spec
                .xlab
                .clone()
                .unwrap_or(format!("DGM ({})", nl.factors.join(", ")));
            let ylab = spec.ylab.clone().unwrap_or(nl.measure.label(0.05));
            c.labels(&f, spec.title.as_deref(), &xlab, &ylab);
        }
    }
}

/// Renders `data` as a standalone SVG 1.1 document of the spec's size.
pub fn render_svg(spec: &PlotSpec, data: &PlotData) -> Result<Vec<u8>, PlotError> {
    let ok = |v: f64| v.is_finite() && (200.0..=20_000.0).contains(&v);
    if !ok(spec.width) || !ok(spec.height) {
        return Err(PlotError::InvalidSize);
    }
    if data.is_empty() {
        return Err(PlotError::EmptyPlot);
    }
    let mut c = Canvas::new(spec);
    let _ = writeln!(c.out, r#"<desc>{} plot</desc>"#, data.kind());
    render(&mut c, spec, data);
    Ok(c.finish())
}

/// Runs `command` with the SVG on stdin and returns its stdout. The
/// command is split on whitespace; `{format}` and `{dpi}` in it are
/// replaced before running.
pub fn convert_svg(
    command: &str,
    svg: &[u8],
    format: &str,
    dpi: f64,
) -> Result<Vec<u8>, PlotError> {
    let mut parts = command.split_whitespace().map(|p| {
        p.replace("{format}", format)
            .replace("{dpi}", &format!("{}", dpi.round() as i64))
    });
    let program = parts
        .next()
        .ok_or_else(|| PlotError::Converter("empty converter command".into()))?;
    let mut child = Command::new(&program)
        .args(parts)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| PlotError::Converter(format!("{program}: {e}")))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = svg.to_vec();
    let writer = std::thread::spawn(move || stdin.write_all(&input));
    let out = child
        .wait_with_output()
        .map_err(|e| PlotError::Converter(e.to_string()))?;
    let _ = writer.join();
    if !out.status.success() {
        return Err(PlotError::Converter(format!(
            "{program} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    if out.stdout.is_empty() {
        return Err(PlotError::Converter(format!(
            "{program} produced no output"
        )));
    }
    Ok(out.stdout)
}
