//! SVG figures: joint maps and diagnostic panels.
//!
//! Output depends only on the inputs (and the jitter seed), so files can be
//! compared byte for byte.

use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::dataset::PredictorSet;
use crate::diagnostics::{ComponentResidualData, InfluenceRecord};
use crate::error::{LmduError, Result};
use crate::estimator::stream_rng;
use crate::geometry::{SupervisedUnfoldingMap, UnfoldingMap};
use crate::majorization::OffsetVariant;

pub const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

/// Fixed fonts and strokes.
pub struct Style {
    pub font_family: &'static str,
    pub font_size: f64,
    pub small_font: f64,
    pub stroke: f64,
    pub thin: f64,
    pub point_radius: f64,
    pub person_radius: f64,
    pub circle_opacity: f64,
    pub padding: f64,
    pub ink: &'static str,
    pub faint: &'static str,
}

pub const STYLE: Style = Style {
    font_family: "Helvetica, Arial, sans-serif",
    font_size: 12.0,
    small_font: 9.0,
    stroke: 1.5,
    thin: 0.75,
    point_radius: 3.5,
    person_radius: 1.8,
    circle_opacity: 0.15,
    padding: 0.05,
    ink: "#222222",
    faint: "#bbbbbb",
};

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Fixed-precision coordinates; `-0.00` is printed as `0.00`.
fn f(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

struct Doc {
    body: String,
    width: f64,
    height: f64,
}

impl Doc {
    fn new(width: f64, height: f64) -> Self {
        Doc { body: String::new(), width, height }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, color: &str, width: f64, dash: Option<&str>) {
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="{}"{dash}/>"#,
            f(x1),
            f(y1),
            f(x2),
            f(y2),
            f(width)
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, attrs: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{}" cy="{}" r="{}" {attrs}/>"#, f(cx), f(cy), f(r));
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-size="{}" text-anchor="{anchor}">{}</text>"#,
            f(x),
            f(y),
            f(size),
            esc(s)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, width: f64, dash: Option<&str>) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", f(*x), f(*y))).collect();
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{}"{dash}/>"#,
            p.join(" "),
            f(width)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, attrs: &str) {
        let _ = writeln!(self.body, r#"<rect x="{}" y="{}" width="{}" height="{}" {attrs}/>"#, f(x), f(y), f(w), f(h));
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"{font}\" fill=\"{ink}\">\n\
             <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{body}</svg>\n",
            w = f(self.width),
            h = f(self.height),
            font = STYLE.font_family,
            ink = STYLE.ink,
            body = self.body
        )
    }
}

/// Data-to-screen transform with one scale factor for both axes.
#[derive(Debug, Clone, Copy)]
struct Frame {
    xmin: f64,
    ymax: f64,
    scale: f64,
    left: f64,
    top: f64,
}

impl Frame {
    fn equal(xmin: f64, xmax: f64, ymin: f64, ymax: f64, width: f64) -> (Frame, f64) {
        let pad = STYLE.padding * (xmax - xmin).max(ymax - ymin).max(1e-9);
        let (xlo, xhi, ylo, yhi) = (xmin - pad, xmax + pad, ymin - pad, ymax + pad);
        let scale = width / (xhi - xlo);
        let frame = Frame { xmin: xlo, ymax: yhi, scale, left: 0.0, top: 0.0 };
        (frame, (yhi - ylo) * scale)
    }

    fn x(&self, v: f64) -> f64 {
        self.left + (v - self.xmin) * self.scale
    }

    fn y(&self, v: f64) -> f64 {
        self.top + (self.ymax - v) * self.scale
    }
}

/// A predictor direction drawn through the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableAxis {
    pub label: String,
    /// Row `b_p` of the regression weights.
    pub direction: [f64; 2],
    /// Observed predictor range.
    pub lo: f64,
    pub hi: f64,
}

/// Everything a map figure shows, in the first two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct MapView {
    pub items: Vec<[f64; 2]>,
    pub item_labels: Vec<String>,
    /// Endorsement radius per item; drawn only when positive.
    pub radii: Vec<Option<f64>>,
    pub persons: Vec<[f64; 2]>,
    pub person_labels: Vec<String>,
    pub axes: Vec<VariableAxis>,
}

fn planar(m: &Array2<f64>) -> Result<Vec<[f64; 2]>> {
    if m.ncols() == 0 {
        return Err(LmduError::EmptyInput("zero-dimensional map".into()));
    }
    Ok(m.axis_iter(Axis(0)).map(|r| [r[0], if r.len() > 1 { r[1] } else { 0.0 }]).collect())
}

fn radii(offsets: &ndarray::Array1<f64>, variant: OffsetVariant, items: usize) -> Vec<Option<f64>> {
    (0..items)
        .map(|r| match variant {
            OffsetVariant::PerItem => offsets.get(r).copied(),
            OffsetVariant::Shared => offsets.first().copied(),
            OffsetVariant::PerPerson => None,
        })
        .collect()
}

impl MapView {
    pub fn unsupervised(map: &UnfoldingMap, item_labels: &[String], profile_labels: &[String]) -> Result<Self> {
        Ok(MapView {
            items: planar(&map.v)?,
            item_labels: item_labels.to_vec(),
            radii: radii(&map.offsets, map.variant, map.v.nrows()),
            persons: planar(&map.u)?,
            person_labels: profile_labels.to_vec(),
            axes: Vec::new(),
        })
    }

    pub fn supervised(map: &SupervisedUnfoldingMap, x: &PredictorSet, item_labels: &[String]) -> Result<Self> {
        let u = map.person_coordinates(x.x())?;
        let b = planar(&map.b)?;
        let axes = b
            .iter()
            .enumerate()
            .map(|(p, &direction)| {
                let col = x.x().column(p);
                VariableAxis {
                    label: x.labels()[p].clone(),
                    direction,
                    lo: col.iter().copied().fold(f64::INFINITY, f64::min),
                    hi: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect();
        Ok(MapView {
            items: planar(&map.v)?,
            item_labels: item_labels.to_vec(),
            radii: radii(&map.offsets, map.variant, map.v.nrows()),
            persons: planar(&u)?,
            person_labels: Vec::new(),
            axes,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapOptions {
    pub width: f64,
    pub show_persons: bool,
    pub label_persons: bool,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions { width: 600.0, show_persons: true, label_persons: false }
    }
}

/// Round tick values covering `[lo, hi]`, about `n` of them.
pub fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return vec![lo];
    }
    let raw = (hi - lo) / n.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

pub fn render_map(view: &MapView, opts: &MapOptions) -> Result<String> {
    if view.items.is_empty() {
        return Err(LmduError::EmptyInput("map has no items".into()));
    }
    if view.item_labels.len() != view.items.len() || view.radii.len() != view.items.len() {
        return Err(LmduError::DimensionMismatch("one label and radius per item required".into()));
    }
    let all_finite = view.items.iter().chain(&view.persons).all(|p| p[0].is_finite() && p[1].is_finite());
    if !all_finite {
        return Err(LmduError::NonFinite { iteration: 0 });
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut grow = |x: f64, y: f64| {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    };
    for (p, r) in view.items.iter().zip(&view.radii) {
        let r = r.filter(|r| *r > 0.0).unwrap_or(0.0);
        grow(p[0] - r, p[1] - r);
        grow(p[0] + r, p[1] + r);
    }
    if opts.show_persons {
        for p in &view.persons {
            grow(p[0], p[1]);
        }
    }
    for a in &view.axes {
        for t in [a.lo, a.hi] {
            grow(t * a.direction[0], t * a.direction[1]);
        }
    }
    let (frame, height) = Frame::equal(xmin, xmax, ymin, ymax, opts.width);
    let mut doc = Doc::new(opts.width, height);

    // translucent discs darken where regions overlap
    for (r, (p, rad)) in view.items.iter().zip(&view.radii).enumerate() {
        if let Some(rad) = rad.filter(|m| *m > 0.0) {
            let color = PALETTE[r % PALETTE.len()];
            doc.circle(
                frame.x(p[0]),
                frame.y(p[1]),
                rad * frame.scale,
                &format!(
                    r#"class="region" fill="{color}" fill-opacity="{}" stroke="{color}" stroke-width="{}""#,
                    STYLE.circle_opacity, STYLE.thin
                ),
            );
        }
    }

    let diag = ((xmax - xmin).powi(2) + (ymax - ymin).powi(2)).sqrt() * 2.0;
    for a in &view.axes {
        let [dx, dy] = a.direction;
        let len = (dx * dx + dy * dy).sqrt();
        if !(len > 0.0) {
            continue;
        }
        let reach = diag / len;
        let at = |t: f64| (frame.x(t * dx), frame.y(t * dy));
        let (x1, y1) = at(-reach);
        let (x2, y2) = at(reach);
        doc.line(x1, y1, x2, y2, STYLE.faint, STYLE.thin, Some("2,3"));
        let (x1, y1) = at(a.lo);
        let (x2, y2) = at(a.hi);
        doc.line(x1, y1, x2, y2, STYLE.ink, STYLE.thin, None);
        // markers perpendicular to the axis
        let (nx, ny) = (-dy / len * 3.0, dx / len * 3.0);
        for t in nice_ticks(a.lo, a.hi, 4) {
            let (cx, cy) = at(t);
            doc.line(cx - nx, cy + ny, cx + nx, cy - ny, STYLE.ink, STYLE.thin, None);
            doc.text(cx + 2.0 * nx, cy - 2.0 * ny, STYLE.small_font, "middle", &tick_label(t));
        }
        doc.text(x2, y2 - 4.0, STYLE.font_size, "middle", &a.label);
    }

    if opts.show_persons {
        for (i, p) in view.persons.iter().enumerate() {
            let (cx, cy) = (frame.x(p[0]), frame.y(p[1]));
            doc.circle(cx, cy, STYLE.person_radius, &format!(r#"class="person" fill="{}""#, STYLE.ink));
            if opts.label_persons {
                if let Some(l) = view.person_labels.get(i) {
                    doc.text(cx + 3.0, cy - 3.0, STYLE.small_font, "start", l);
                }
            }
        }
    }

    for (r, p) in view.items.iter().enumerate() {
        let color = PALETTE[r % PALETTE.len()];
        let (cx, cy) = (frame.x(p[0]), frame.y(p[1]));
        doc.circle(cx, cy, STYLE.point_radius, &format!(r#"class="item" fill="{color}""#));
        doc.text(cx, cy - STYLE.point_radius - 2.0, STYLE.font_size, "middle", &view.item_labels[r]);
    }
    Ok(doc.finish())
}

/// Boxplot input: one box per group.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGroup {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PanelData {
    /// Final deviances of random starts, one column per group (typically
    /// dimensionality), jittered horizontally.
    LocalOptima {
        groups: Vec<(String, Vec<f64>)>,
        seed: u64,
    },
    Cpr(Vec<ComponentResidualData>),
    Influence(Vec<InfluenceRecord>),
    BrierBox(Vec<BoxGroup>),
    /// Boxplots with caller-chosen title and axis label.
    Boxes {
        title: String,
        ylabel: String,
        groups: Vec<BoxGroup>,
    },
}

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 200.0;
const MARGIN_L: f64 = 48.0;
const MARGIN_B: f64 = 32.0;
const MARGIN_T: f64 = 22.0;
const MARGIN_R: f64 = 12.0;

/// Axes box for one panel with independent x and y scales.
struct Plot {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let pad = (hi - lo) * STYLE.padding;
    (lo - pad, hi + pad)
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut r: Option<(f64, f64)> = None;
    for v in values.filter(|v| v.is_finite()) {
        r = Some(match r {
            None => (v, v),
            Some((a, b)) => (a.min(v), b.max(v)),
        });
    }
    r
}

impl Plot {
    fn at(col: usize, row: usize, xr: (f64, f64), yr: (f64, f64)) -> Plot {
        Plot {
            x0: col as f64 * (PANEL_W + MARGIN_L + MARGIN_R) + MARGIN_L,
            y0: row as f64 * (PANEL_H + MARGIN_T + MARGIN_B) + MARGIN_T,
            w: PANEL_W,
            h: PANEL_H,
            xr: padded(xr.0, xr.1),
            yr: padded(yr.0, yr.1),
        }
    }

    fn x(&self, v: f64) -> f64 {
        self.x0 + (v - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h - (v - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    fn frame(&self, doc: &mut Doc, title: &str, xlabel: &str, ylabel: &str, xticks: bool) {
        doc.rect(
            self.x0,
            self.y0,
            self.w,
            self.h,
            &format!(r#"fill="none" stroke="{}" stroke-width="{}""#, STYLE.ink, STYLE.thin),
        );
        for t in nice_ticks(self.yr.0, self.yr.1, 5) {
            let y = self.y(t);
            doc.line(self.x0 - 4.0, y, self.x0, y, STYLE.ink, STYLE.thin, None);
            doc.text(self.x0 - 6.0, y + 3.0, STYLE.small_font, "end", &tick_label(t));
        }
        if xticks {
            for t in nice_ticks(self.xr.0, self.xr.1, 5) {
                let x = self.x(t);
                doc.line(x, self.y0 + self.h, x, self.y0 + self.h + 4.0, STYLE.ink, STYLE.thin, None);
                doc.text(x, self.y0 + self.h + 14.0, STYLE.small_font, "middle", &tick_label(t));
            }
        }
        doc.text(self.x0 + self.w / 2.0, self.y0 - 6.0, STYLE.font_size, "middle", title);
        doc.text(self.x0 + self.w / 2.0, self.y0 + self.h + 27.0, STYLE.small_font, "middle", xlabel);
        let (lx, ly) = (self.x0 - 38.0, self.y0 + self.h / 2.0);
        let _ = writeln!(
            doc.body,
            r#"<text x="{}" y="{}" font-size="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
            f(lx),
            f(ly),
            f(STYLE.small_font),
            f(lx),
            f(ly),
            esc(ylabel)
        );
    }
}

fn tick_label(t: f64) -> String {
    let s = format!("{t:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn grid_size(panels: usize, cols: usize) -> (f64, f64) {
    let cols = cols.min(panels).max(1);
    let rows = panels.div_ceil(cols);
    (cols as f64 * (PANEL_W + MARGIN_L + MARGIN_R), rows as f64 * (PANEL_H + MARGIN_T + MARGIN_B))
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn render_panels(data: &PanelData) -> Result<String> {
    match data {
        PanelData::LocalOptima { groups, seed } => local_optima(groups, *seed),
        PanelData::Cpr(panels) => cpr(panels),
        PanelData::Influence(records) => influence_panels(records),
        PanelData::BrierBox(groups) => boxplots(groups, "Prediction error", "Brier score"),
        PanelData::Boxes { title, ylabel, groups } => boxplots(groups, title, ylabel),
    }
}

fn local_optima(groups: &[(String, Vec<f64>)], seed: u64) -> Result<String> {
    let yr = range(groups.iter().flat_map(|g| g.1.iter().copied()))
        .ok_or_else(|| LmduError::EmptyInput("no deviances to plot".into()))?;
    let k = groups.len();
    let (w, h) = grid_size(1, 1);
    let mut doc = Doc::new(w, h);
    let plot = Plot::at(0, 0, (0.5, k as f64 + 0.5), yr);
    plot.frame(&mut doc, "Deviance of random starts", "", "deviance", false);
    let mut rng = stream_rng(seed, 0);
    for (g, (label, values)) in groups.iter().enumerate() {
        let color = PALETTE[g % PALETTE.len()];
        for &v in values.iter().filter(|v| v.is_finite()) {
            let jitter: f64 = rng.random_range(-0.15..0.15);
            doc.circle(
                plot.x(g as f64 + 1.0 + jitter),
                plot.y(v),
                2.0,
                &format!(r#"class="start" fill="{color}" fill-opacity="0.7""#),
            );
        }
        doc.text(plot.x(g as f64 + 1.0), plot.y0 + plot.h + 14.0, STYLE.small_font, "middle", label);
    }
    Ok(doc.finish())
}

fn cpr(panels: &[ComponentResidualData]) -> Result<String> {
    if panels.is_empty() {
        return Err(LmduError::EmptyInput("no component-plus-residual panels".into()));
    }
    let cols = 3;
    let (w, h) = grid_size(panels.len(), cols);
    let mut doc = Doc::new(w, h);
    for (k, p) in panels.iter().enumerate() {
        let xr =
            range(p.x.iter().chain(&p.grid).copied()).ok_or_else(|| LmduError::EmptyInput("empty panel".into()))?;
        let yr = range(p.partial.iter().chain(&p.assumed).chain(&p.smooth).copied())
            .ok_or_else(|| LmduError::EmptyInput("empty panel".into()))?;
        let plot = Plot::at(k % cols, k / cols, xr, yr);
        plot.frame(&mut doc, &format!("{} / {}", p.item, p.predictor), &p.predictor, "partial fit + 4e", true);
        for (&x, &y) in p.x.iter().zip(&p.partial) {
            doc.circle(
                plot.x(x),
                plot.y(y),
                1.5,
                &format!(r#"class="point" fill="{}" fill-opacity="0.5""#, STYLE.faint),
            );
        }
        let curve =
            |ys: &[f64]| -> Vec<(f64, f64)> { p.grid.iter().zip(ys).map(|(&x, &y)| (plot.x(x), plot.y(y))).collect() };
        doc.polyline(&curve(&p.assumed), PALETTE[1], STYLE.stroke, None);
        doc.polyline(&curve(&p.smooth), PALETTE[2], STYLE.stroke, Some("5,3"));
    }
    Ok(doc.finish())
}

fn influence_panels(records: &[InfluenceRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(LmduError::EmptyInput("no influence records".into()));
    }
    let (w, h) = grid_size(3, 3);
    let mut doc = Doc::new(w, h);
    let xr = (0.0, records.iter().map(|r| r.observation).max().unwrap_or(0) as f64);
    let series: [(&str, fn(&InfluenceRecord) -> Option<f64>); 3] = [
        ("deviance change", |r| r.delta_deviance),
        ("regression weights change", |r| r.delta_b),
        ("item coordinates change", |r| r.delta_v),
    ];
    for (k, (title, get)) in series.iter().enumerate() {
        let yr = range(records.iter().filter_map(get).chain([0.0])).unwrap_or((0.0, 1.0));
        let plot = Plot::at(k, 0, xr, yr);
        plot.frame(&mut doc, title, "observation", "", true);
        let base = plot.y(0.0);
        for r in records {
            if let Some(v) = get(r) {
                let x = plot.x(r.observation as f64);
                doc.line(x, base, x, plot.y(v), PALETTE[k], STYLE.thin, None);
            }
        }
    }
    Ok(doc.finish())
}

fn boxplots(groups: &[BoxGroup], title: &str, ylabel: &str) -> Result<String> {
    let yr = range(groups.iter().flat_map(|g| g.values.iter().copied()))
        .ok_or_else(|| LmduError::EmptyInput("no values for boxplots".into()))?;
    let k = groups.len();
    let (_, h) = grid_size(1, 1);
    let w = (MARGIN_L + MARGIN_R + (k as f64 * 40.0).max(PANEL_W)).max(PANEL_W);
    let mut doc = Doc::new(w, h);
    let mut plot = Plot::at(0, 0, (0.5, k as f64 + 0.5), yr);
    plot.w = w - MARGIN_L - MARGIN_R;
    plot.frame(&mut doc, title, "", ylabel, false);
    for (g, group) in groups.iter().enumerate() {
        let mut v: Vec<f64> = group.values.iter().copied().filter(|v| v.is_finite()).collect();
        let cx = plot.x(g as f64 + 1.0);
        doc.text(cx, plot.y0 + plot.h + 14.0, STYLE.small_font, "middle", &group.label);
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let (q1, q2, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let fence = 1.5 * (q3 - q1);
        let lo = v.iter().copied().find(|&x| x >= q1 - fence).unwrap_or(q1);
        let hi = v.iter().rev().copied().find(|&x| x <= q3 + fence).unwrap_or(q3);
        let color = PALETTE[g % PALETTE.len()];
        let half = 12.0;
        doc.line(cx, plot.y(lo), cx, plot.y(q1), STYLE.ink, STYLE.thin, None);
        doc.line(cx, plot.y(q3), cx, plot.y(hi), STYLE.ink, STYLE.thin, None);
        doc.rect(
            cx - half,
            plot.y(q3),
            2.0 * half,
            plot.y(q1) - plot.y(q3),
            &format!(
                r#"class="box" fill="{color}" fill-opacity="0.4" stroke="{}" stroke-width="{}""#,
                STYLE.ink, STYLE.thin
            ),
        );
        doc.line(cx - half, plot.y(q2), cx + half, plot.y(q2), STYLE.ink, STYLE.stroke, None);
        for &x in v.iter().filter(|&&x| x < lo || x > hi) {
            doc.circle(cx, plot.y(x), 1.8, r##"fill="none" stroke="#222222""##);
        }
    }
    Ok(doc.finish())
}
