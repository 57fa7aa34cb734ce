//! Deterministic SVG rendering of trajectories: x-y path coloured by segment
//! kind, robot/trailer glyphs at fixed time intervals, and the line `ltheta = 0`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Line, SegmentKind, Trajectory, TrajectorySample};

pub const SINGULAR_COLOR: &str = "#d62728";
pub const REGULAR_COLOR: &str = "#1f77b4";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotOptions {
    pub width: f64,
    pub height: f64,
    /// Time between robot/trailer glyphs; `None` draws none.
    pub glyph_interval: Option<f64>,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self { width: 800.0, height: 600.0, glyph_interval: Some(2.0) }
    }
}

struct View {
    x0: f64,
    y1: f64,
    k: f64,
    margin: f64,
}

impl View {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (self.margin + (x - self.x0) * self.k, self.margin + (self.y1 - y) * self.k)
    }
}

fn color(kind: SegmentKind) -> &'static str {
    if kind.is_regular() {
        REGULAR_COLOR
    } else {
        SINGULAR_COLOR
    }
}

/// Distinct adjoint lines of the trajectory, one per continuous adjoint block.
fn lines(traj: &Trajectory) -> Vec<Line> {
    let mut out: Vec<Line> = Vec::new();
    let mut consider = |l: Option<Line>| {
        if let Some(l) = l {
            let l = l.normalized();
            let same = |m: &Line| {
                ((m.c1 - l.c1).abs() + (m.c2 - l.c2).abs() + (m.c3 - l.c3).abs() < 1e-9)
                    || ((m.c1 + l.c1).abs() + (m.c2 + l.c2).abs() + (m.c3 + l.c3).abs() < 1e-9)
            };
            if !out.iter().any(same) {
                out.push(l);
            }
        }
    };
    for (i, seg) in traj.segments.iter().enumerate() {
        if i == 0 || seg.reseeded {
            let s = seg.first();
            consider(crate::model::ExtremalConstants::from_seed(&s.q, &s.lambda).line());
        }
    }
    if traj.segments.is_empty() {
        consider(traj.constants.line());
    }
    out
}

/// Clips an infinite line to the box; returns the two end points if it crosses it.
fn clip(l: &Line, xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Option<((f64, f64), (f64, f64))> {
    let (cx, cy) = ((xmin + xmax) / 2.0, (ymin + ymax) / 2.0);
    let s0 = l.station(cx, cy);
    let (px, py) = l.point_at(s0);
    let n = l.norm();
    let (ux, uy) = (l.c1 / n, l.c2 / n);
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (p, u, a, b) in [(px, ux, xmin, xmax), (py, uy, ymin, ymax)] {
        if u.abs() < 1e-15 {
            if p < a || p > b {
                return None;
            }
        } else {
            let (t1, t2) = ((a - p) / u, (b - p) / u);
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
    }
    (lo < hi).then_some(((px + lo * ux, py + lo * uy), (px + hi * ux, py + hi * uy)))
}

fn glyph(out: &mut String, view: &View, s: &TrajectorySample) {
    let (x, y, th, b) = (s.q.x, s.q.y, s.q.theta, s.q.beta);
    // robot body: 0.5 x 0.3 rectangle centred on the axle midpoint
    let (c, si) = (th.cos(), th.sin());
    let corner = |a: f64, w: f64| view.px(x + a * c - w * si, y + a * si + w * c);
    let pts = [corner(0.35, 0.15), corner(0.35, -0.15), corner(-0.15, -0.15), corner(-0.15, 0.15)];
    let _ = write!(out, "<polygon class=\"robot\" points=\"");
    for (i, (px, py)) in pts.iter().enumerate() {
        let _ = write!(out, "{}{px:.3},{py:.3}", if i > 0 { " " } else { "" });
    }
    out.push_str("\"/>\n");
    // trailer: hitch at the robot axle, wheels one unit behind along theta - beta
    let tt = th - b;
    let (tx, ty) = (x - tt.cos(), y - tt.sin());
    let (h0, h1) = view.px(x, y);
    let (t0, t1) = view.px(tx, ty);
    let _ = writeln!(out, "<line class=\"hitch\" x1=\"{h0:.3}\" y1=\"{h1:.3}\" x2=\"{t0:.3}\" y2=\"{t1:.3}\"/>");
    let (a0, a1) = view.px(tx - 0.15 * tt.sin(), ty + 0.15 * tt.cos());
    let (b0, b1) = view.px(tx + 0.15 * tt.sin(), ty - 0.15 * tt.cos());
    let _ = writeln!(out, "<line class=\"trailer\" x1=\"{a0:.3}\" y1=\"{a1:.3}\" x2=\"{b0:.3}\" y2=\"{b1:.3}\"/>");
}

/// Renders `traj` as an SVG document. Identical input and options give identical bytes.
pub fn render_svg(traj: &Trajectory, opts: &PlotOptions) -> Result<String> {
    if let Some(g) = opts.glyph_interval {
        if !(g > 0.0) {
            return Err(Error::InvalidParameter(format!("glyph interval must be positive, got {g}")));
        }
    }
    if !(opts.width > 0.0 && opts.height > 0.0) {
        return Err(Error::InvalidParameter("canvas size must be positive".into()));
    }
    let (w, h) = (opts.width, opts.height);
    let mut o = String::new();
    let _ = writeln!(
        o,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">"
    );
    o.push_str(concat!(
        "<style>\n",
        "  .path { fill: none; stroke-width: 2; stroke-linejoin: round; }\n",
        "  .ell { stroke: #7f7f7f; stroke-width: 1; stroke-dasharray: 6 4; }\n",
        "  .robot { fill: #ffffff; stroke: #000000; stroke-width: 1; }\n",
        "  .hitch { stroke: #000000; stroke-width: 1; }\n",
        "  .trailer { stroke: #000000; stroke-width: 2.5; }\n",
        "</style>\n"
    ));
    let _ = writeln!(o, "<rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"#ffffff\"/>");
    if traj.samples().next().is_none() {
        o.push_str("</svg>\n");
        return Ok(o);
    }

    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in traj.samples() {
        xmin = xmin.min(s.q.x);
        xmax = xmax.max(s.q.x);
        ymin = ymin.min(s.q.y);
        ymax = ymax.max(s.q.y);
    }
    // room for the trailer glyphs
    let pad = 1.5;
    let (xmin, xmax, ymin, ymax) = (xmin - pad, xmax + pad, ymin - pad, ymax + pad);
    let margin = 10.0;
    let k = ((w - 2.0 * margin) / (xmax - xmin)).min((h - 2.0 * margin) / (ymax - ymin));
    // centre the drawing
    let xc = (xmin + xmax) / 2.0 - (w - 2.0 * margin) / (2.0 * k);
    let yc = (ymin + ymax) / 2.0 + (h - 2.0 * margin) / (2.0 * k);
    let view = View { x0: xc, y1: yc, k, margin };
    let (bx0, by1) = (xc, yc);
    let (bx1, by0) = (xc + (w - 2.0 * margin) / k, yc - (h - 2.0 * margin) / k);

    for l in lines(traj) {
        if let Some(((ax, ay), (bx, by))) = clip(&l, bx0, bx1, by0, by1) {
            let (a0, a1) = view.px(ax, ay);
            let (b0, b1) = view.px(bx, by);
            let _ = writeln!(o, "<line class=\"ell\" x1=\"{a0:.3}\" y1=\"{a1:.3}\" x2=\"{b0:.3}\" y2=\"{b1:.3}\"/>");
        }
    }
    for seg in &traj.segments {
        let _ = write!(o, "<polyline class=\"path {}\" stroke=\"{}\" points=\"", seg.kind.name(), color(seg.kind));
        let mut last: Option<(f64, f64)> = None;
        for (i, s) in seg.samples.iter().enumerate() {
            let p = view.px(s.q.x, s.q.y);
            // thin out points closer than a tenth of a pixel, keeping the ends
            if let Some(q) = last {
                if i + 1 < seg.samples.len() && (p.0 - q.0).hypot(p.1 - q.1) < 0.1 {
                    continue;
                }
            }
            let _ = write!(o, "{}{:.3},{:.3}", if last.is_some() { " " } else { "" }, p.0, p.1);
            last = Some(p);
        }
        o.push_str("\"/>\n");
    }
    if let Some(g) = opts.glyph_interval {
        let mut next = traj.segments.first().map_or(0.0, |s| s.t_start);
        for s in traj.samples() {
            if s.t >= next - 1e-9 {
                glyph(&mut o, &view, s);
                next += g * ((s.t - next) / g + 1.0).floor().max(1.0);
            }
        }
        if let Some(s) = traj.last_sample() {
            glyph(&mut o, &view, s);
        }
    }
    o.push_str("</svg>\n");
    Ok(o)
}
