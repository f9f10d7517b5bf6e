//! Predicted-versus-true gaze scatter as CSV and SVG.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::model::MtlModel;
use crate::tensor::Tensor;

/// Anything that maps one EEG window to a gaze estimate in mm.
pub trait GazePredictor {
    fn predict_gaze(&self, eeg: &Tensor<f32>) -> Result<[f64; 2]>;
}

impl<T: Element> GazePredictor for MtlModel<T> {
    fn predict_gaze(&self, eeg: &Tensor<f32>) -> Result<[f64; 2]> {
        self.predict(&eeg.cast())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRow {
    pub true_x: f64,
    pub true_y: f64,
    pub pred_x: f64,
    pub pred_y: f64,
}

pub fn scatter_rows(predictor: &dyn GazePredictor, ds: &Dataset) -> Result<Vec<ScatterRow>> {
    ds.samples
        .iter()
        .map(|s| {
            let p = predictor.predict_gaze(&s.eeg)?;
            let t = s.gaze_f64();
            Ok(ScatterRow { true_x: t[0], true_y: t[1], pred_x: p[0], pred_y: p[1] })
        })
        .collect()
}

pub const SCATTER_HEADER: &str = "true_x,true_y,pred_x,pred_y";

pub fn scatter_csv(rows: &[ScatterRow]) -> String {
    let mut out = format!("{SCATTER_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{:?},{:?},{:?},{:?}", r.true_x, r.true_y, r.pred_x, r.pred_y);
    }
    out
}

/// CSS classes of the per-sample glyphs.
pub const TRUE_GLYPH: &str = "gaze-true";
pub const PRED_GLYPH: &str = "gaze-pred";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 520.0;
const MARGIN: f64 = 60.0;

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

/// SVG scatter: true positions as circles, predictions as crosses, with mm
/// axes and a legend.
pub fn scatter_svg(rows: &[ScatterRow], title: &str) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("scatter plot needs at least one row".into()));
    }
    let xs = rows.iter().flat_map(|r| [r.true_x, r.pred_x]);
    let ys = rows.iter().flat_map(|r| [r.true_y, r.pred_y]);
    let bounds = |it: &mut dyn Iterator<Item = f64>| {
        it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = bounds(&mut xs.into_iter());
    let (y0, y1) = bounds(&mut ys.into_iter());
    if ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { what: "scatter coordinate".into(), location: "plot".into() });
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(1.0);
        let step = nice_step(span);
        ((lo / step).floor() * step, (hi / step).ceil() * step, step)
    };
    let (x0, x1, xstep) = pad(x0, x1);
    let (y0, y1, ystep) = pad(y0, y1);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot_w;
    // Screen coordinates grow downward, as on the display.
    let sy = |y: f64| MARGIN + (y - y0) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}"/>"#);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="ticks" fill="black">"#);
    let mut x = x0;
    while x <= x1 + 1e-9 {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(x), HEIGHT - MARGIN + 16.0, x);
        x += xstep;
    }
    let mut y = y0;
    while y <= y1 + 1e-9 {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN - 6.0, sy(y) + 4.0, y);
        y += ystep;
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">x (mm)</text>"#, WIDTH / 2.0, HEIGHT - 18.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">y (mm)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g class="true" fill="none" stroke="#1f77b4">"##);
    for r in rows {
        let _ = writeln!(s, r#"<circle class="{TRUE_GLYPH}" cx="{:.2}" cy="{:.2}" r="3"/>"#, sx(r.true_x), sy(r.true_y));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g class="pred" stroke="#d62728">"##);
    for r in rows {
        let (cx, cy) = (sx(r.pred_x), sy(r.pred_y));
        let _ = writeln!(
            s,
            r#"<path class="{PRED_GLYPH}" d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}"/>"#,
            cx - 3.0,
            cy - 3.0,
            cx + 3.0,
            cy + 3.0,
            cx - 3.0,
            cy + 3.0,
            cx + 3.0,
            cy - 3.0
        );
    }
    let _ = writeln!(s, "</g>");

    let lx = WIDTH - MARGIN - 130.0;
    let _ = writeln!(s, r#"<g class="legend">"#);
    let _ = writeln!(s, r##"<rect x="{lx}" y="{}" width="126" height="40" fill="#ffffff" stroke="#999999"/>"##, MARGIN + 4.0);
    let _ = writeln!(s, r##"<circle cx="{}" cy="{}" r="3" fill="none" stroke="#1f77b4"/>"##, lx + 12.0, MARGIN + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}">true position</text>"#, lx + 22.0, MARGIN + 20.0);
    let (px, py) = (lx + 12.0, MARGIN + 32.0);
    let _ = writeln!(
        s,
        r##"<path d="M{} {}L{} {}M{} {}L{} {}" stroke="#d62728"/>"##,
        px - 3.0,
        py - 3.0,
        px + 3.0,
        py + 3.0,
        px - 3.0,
        py + 3.0,
        px + 3.0,
        py - 3.0
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}">predicted</text>"#, lx + 22.0, MARGIN + 36.0);
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
