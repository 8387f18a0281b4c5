//! Self-contained SVG quiver plots with certificate boxes.

use std::fmt::Write;

use crate::Point;

const SIZE: f64 = 420.0;
const MARGIN: f64 = 24.0;

/// One square panel in world coordinates.
#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    /// Closed polyline.
    pub boundary: Vec<Point>,
    /// Extra dashed circles `(center, radius)`.
    pub circles: Vec<(Point, f64)>,
    /// Base point and field value.
    pub arrows: Vec<(Point, [f64; 2])>,
    /// `(lo, hi, degree)`.
    pub boxes: Vec<(Point, Point, i64)>,
    pub markers: Vec<(Point, String)>,
}

struct View {
    lo: Point,
    scale: f64,
    dx: f64,
}

impl View {
    fn new(panel: &Panel, index: usize) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut grow = |p: Point| {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        };
        panel.boundary.iter().for_each(|p| grow(*p));
        for (c, r) in &panel.circles {
            grow([c[0] - r, c[1] - r]);
            grow([c[0] + r, c[1] + r]);
        }
        if !lo[0].is_finite() {
            lo = [-1.0, -1.0];
            hi = [1.0, 1.0];
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let pad = 0.04 * span;
        View {
            lo: [lo[0] - pad, lo[1] - pad],
            scale: (SIZE - 2.0 * MARGIN) / (span + 2.0 * pad),
            dx: index as f64 * SIZE,
        }
    }

    fn at(&self, p: Point) -> (f64, f64) {
        (
            self.dx + MARGIN + (p[0] - self.lo[0]) * self.scale,
            SIZE - MARGIN - (p[1] - self.lo[1]) * self.scale,
        )
    }
}

fn arrow_len(panel: &Panel, view: &View) -> f64 {
    let n = (panel.arrows.len() as f64).sqrt().max(4.0);
    0.7 * (SIZE - 2.0 * MARGIN) / n / view.scale
}

/// Renders the panels side by side.
pub fn render(panels: &[Panel]) -> String {
    let width = SIZE * panels.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{SIZE:.0}" viewBox="0 0 {width:.0} {SIZE:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        let view = View::new(panel, i);
        let _ = writeln!(s, r#"<g id="panel{i}">"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="16" font-size="13" text-anchor="middle">{}</text>"#,
            view.dx + SIZE / 2.0,
            escape(&panel.title)
        );
        if !panel.boundary.is_empty() {
            let pts: Vec<String> = panel
                .boundary
                .iter()
                .map(|p| {
                    let (x, y) = view.at(*p);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(s, r##"<polygon points="{}" fill="none" stroke="#222" stroke-width="1.5"/>"##, pts.join(" "));
        }
        for (c, r) in &panel.circles {
            let (x, y) = view.at(*c);
            let _ = writeln!(
                s,
                r##"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="none" stroke="#888" stroke-dasharray="4 3"/>"##,
                r * view.scale
            );
        }
        let len = arrow_len(panel, &view);
        for (p, v) in &panel.arrows {
            let n = v[0].hypot(v[1]);
            if !(n > 0.0) || !n.is_finite() {
                continue;
            }
            let d = [v[0] / n * len, v[1] / n * len];
            let (x0, y0) = view.at([p[0] - 0.5 * d[0], p[1] - 0.5 * d[1]]);
            let (x1, y1) = view.at([p[0] + 0.5 * d[0], p[1] + 0.5 * d[1]]);
            let (ux, uy) = ((x1 - x0) / (len * view.scale), (y1 - y0) / (len * view.scale));
            let head = 0.3 * len * view.scale;
            let (hx1, hy1) = (x1 - head * (ux * 0.866 - uy * 0.5), y1 - head * (uy * 0.866 + ux * 0.5));
            let (hx2, hy2) = (x1 - head * (ux * 0.866 + uy * 0.5), y1 - head * (uy * 0.866 - ux * 0.5));
            let _ = writeln!(
                s,
                r##"<path d="M{x0:.2} {y0:.2}L{x1:.2} {y1:.2}M{hx1:.2} {hy1:.2}L{x1:.2} {y1:.2}L{hx2:.2} {hy2:.2}" stroke="#3465a4" fill="none" stroke-width="1"/>"##
            );
        }
        for (lo, hi, deg) in &panel.boxes {
            let (x0, y1) = view.at(*lo);
            let (x1, y0) = view.at(*hi);
            let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
            let w = (x1 - x0).max(8.0);
            let h = (y1 - y0).max(8.0);
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#c00" stroke-width="1.5"/>"##,
                cx - w / 2.0,
                cy - h / 2.0
            );
            let _ = writeln!(
                s,
                r##"<text x="{:.2}" y="{:.2}" font-size="12" fill="#c00">{deg}</text>"##,
                cx + w / 2.0 + 3.0,
                cy - h / 2.0 - 2.0
            );
        }
        for (p, label) in &panel.markers {
            let (x, y) = view.at(*p);
            let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="#c00"/>"##);
            let _ = writeln!(
                s,
                r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#c00">{}</text>"##,
                x + 6.0,
                y - 6.0,
                escape(label)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
