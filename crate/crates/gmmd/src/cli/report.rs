//! Deterministic SVG figures for run reports: scatter overlays of a space
//! against its mapped counterpart, and per-component loss curves.
//!
//! Rendering is a pure function of the input numbers (fixed canvas, fixed
//! palette, fixed decimal formatting), so identical runs produce identical
//! bytes — handy for diffing artifacts across reruns.

use std::fmt::Write as _;

// ============================================================================
// Canvas layout
// ============================================================================

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 48.0;

pub(crate) const PALETTE: [&str; 5] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// One named series of 2-D points.
pub(crate) struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<[f64; 2]>,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    /// Bounds over all points, padded 5% per side; degenerate spans widen to
    /// a unit box so every input renders.
    fn fit(series: &[Series]) -> Frame {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for s in series {
            for p in &s.points {
                x_min = x_min.min(p[0]);
                x_max = x_max.max(p[0]);
                y_min = y_min.min(p[1]);
                y_max = y_max.max(p[1]);
            }
        }
        if !x_min.is_finite() {
            (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
        }
        let pad = |lo: f64, hi: f64| {
            let span = hi - lo;
            if span <= 0.0 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo - 0.05 * span, hi + 0.05 * span)
            }
        };
        let (x_min, x_max) = pad(x_min, x_max);
        let (y_min, y_max) = pad(y_min, y_max);
        Frame {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        // SVG y grows downward.
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Tick label formatting: plain decimals in a comfortable range, scientific
/// outside it. Fixed precision keeps the output deterministic.
fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn fmt_coord(v: f64) -> String {
    format!("{v:.2}")
}

// ============================================================================
// Chart skeleton
// ============================================================================

fn open_svg(title: &str) -> String {
    let mut s = String::with_capacity(16 * 1024);
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        s,
        "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        s,
        "  <text x=\"{:.2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let left = MARGIN_LEFT;
    let right = WIDTH - MARGIN_RIGHT;
    let top = MARGIN_TOP;
    let bottom = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        s,
        "  <rect x=\"{left}\" y=\"{top}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>",
        right - left,
        bottom - top
    );
    const TICKS: usize = 5;
    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let xv = frame.x_min + f * (frame.x_max - frame.x_min);
        let yv = frame.y_min + f * (frame.y_max - frame.y_min);
        let px = frame.sx(xv);
        let py = frame.sy(yv);
        let _ = writeln!(
            s,
            "  <line x1=\"{px:.2}\" y1=\"{bottom}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#444444\" stroke-width=\"1\"/>",
            bottom + 4.0
        );
        let _ = writeln!(
            s,
            "  <text x=\"{px:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            bottom + 16.0,
            fmt_tick(xv)
        );
        let _ = writeln!(
            s,
            "  <line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{left}\" y2=\"{py:.2}\" stroke=\"#444444\" stroke-width=\"1\"/>",
            left - 4.0
        );
        let _ = writeln!(
            s,
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            left - 7.0,
            py + 3.5,
            fmt_tick(yv)
        );
    }
    let _ = writeln!(
        s,
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        (left + right) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        "  <text x=\"16\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(y_label)
    );
}

fn legend(s: &mut String, series: &[Series]) {
    let mut y = MARGIN_TOP + 14.0;
    let x = WIDTH - MARGIN_RIGHT - 150.0;
    for sr in series {
        let _ = writeln!(
            s,
            "  <rect x=\"{x:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/>",
            y - 9.0,
            sr.color
        );
        let _ = writeln!(
            s,
            "  <text x=\"{:.2}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            x + 15.0,
            escape(&sr.label)
        );
        y += 16.0;
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

// ============================================================================
// Public renderers
// ============================================================================

/// Scatter plot of every series on a shared frame.
pub(crate) fn scatter_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series);
    let mut s = open_svg(title);
    axes(&mut s, &frame, x_label, y_label);
    for sr in series {
        for p in &sr.points {
            let _ = writeln!(
                s,
                "  <circle cx=\"{}\" cy=\"{}\" r=\"2\" fill=\"{}\" fill-opacity=\"0.7\"/>",
                fmt_coord(frame.sx(p[0])),
                fmt_coord(frame.sy(p[1])),
                sr.color
            );
        }
    }
    legend(&mut s, series);
    s.push_str("</svg>\n");
    s
}

/// Polyline chart of every series on a shared frame (points in x order).
pub(crate) fn line_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series);
    let mut s = open_svg(title);
    axes(&mut s, &frame, x_label, y_label);
    for sr in series {
        if sr.points.is_empty() {
            continue;
        }
        let mut path = String::with_capacity(sr.points.len() * 12);
        for (i, p) in sr.points.iter().enumerate() {
            if i > 0 {
                path.push(' ');
            }
            let _ = write!(
                path,
                "{},{}",
                fmt_coord(frame.sx(p[0])),
                fmt_coord(frame.sy(p[1]))
            );
        }
        let _ = writeln!(
            s,
            "  <polyline points=\"{path}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            sr.color
        );
    }
    legend(&mut s, series);
    s.push_str("</svg>\n");
    s
}

// ============================================================================
// Tests
// ============================================================================
