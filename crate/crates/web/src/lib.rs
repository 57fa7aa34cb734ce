//! wasm-bindgen entry points for the static demo page in `www/`.

use trailer_pmp::checker::{check_pmp, ToleranceSet};
use trailer_pmp::composer::{simulate_extremal, SimulateOptions};
use trailer_pmp::plot::{render_svg, PlotOptions};
use trailer_pmp::regular::regular_segment;
use trailer_pmp::singular::merging_curve;
use trailer_pmp::{AdjointState, Configuration, Line, MergeBranch, Segment, Trajectory};
use wasm_bindgen::prelude::*;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;

/// An SVG drawing plus a one-line text summary.
#[wasm_bindgen]
pub struct Rendered {
    svg: String,
    summary: String,
}

#[wasm_bindgen]
impl Rendered {
    #[wasm_bindgen(getter)]
    pub fn svg(&self) -> String {
        self.svg.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

fn draw(traj: &Trajectory, glyph_interval: f64, summary: String) -> Result<Rendered, JsError> {
    let opts = PlotOptions { width: WIDTH, height: HEIGHT, glyph_interval: Some(glyph_interval) };
    Ok(Rendered { svg: render_svg(traj, &opts)?, summary })
}

fn single(seg: Segment) -> Trajectory {
    Trajectory { constants: seg.constants, segments: vec![seg], truncated: false }
}

fn describe(traj: &Trajectory) -> String {
    let rep = check_pmp(traj, &ToleranceSet::default());
    let kinds: Vec<&str> = traj.segments.iter().map(|s| s.kind.name()).collect();
    let end = traj.last_sample().map(|s| s.q).unwrap_or_default();
    format!(
        "{} | end (x, y, theta, beta) = ({:.3}, {:.3}, {:.3}, {:.3}) | checker {}",
        kinds.join(" > "),
        end.x,
        end.y,
        end.theta,
        end.beta,
        if rep.pass { "pass".to_string() } else { format!("FAIL {:?}", rep.failed()) }
    )
}

/// Bang-bang primitive from the origin with heading 0.
#[wasm_bindgen]
pub fn regular_primitive(v: f64, omega: f64, beta0: f64, lbeta0: f64, dt: f64) -> Result<Rendered, JsError> {
    let q0 = Configuration::new(0.0, 0.0, 0.0, beta0);
    let seg = regular_segment(&q0, &AdjointState::new(0.0, 0.0, omega, lbeta0), v, omega, dt, 1e-2)?;
    let traj = single(seg);
    let summary = describe(&traj);
    draw(&traj, (dt / 6.0).max(0.1), summary)
}

/// Merging curve onto (or off) the x-axis.
#[wasm_bindgen]
pub fn merging(v: f64, beta_start: f64) -> Result<Rendered, JsError> {
    let l = Line::new(1.0, 0.0, 0.0)?;
    let curve = merging_curve(&l, v, MergeBranch::PLUS, beta_start, 1e-6, 1e-3)?;
    let traj = single(curve.segment);
    let summary = format!("{:?}, duration {:.3} | {}", curve.direction, traj.duration(), describe(&traj));
    draw(&traj, 2.0, summary)
}

/// Extremal of the adjoint seed `(lx, ly, ltheta, lbeta)` from heading 0.
#[wasm_bindgen]
pub fn extremal(beta0: f64, lx: f64, ly: f64, ltheta: f64, lbeta: f64, duration: f64) -> Result<Rendered, JsError> {
    let q0 = Configuration::new(0.0, 0.0, 0.0, beta0);
    let opts = SimulateOptions { h: 1e-2, ..Default::default() };
    let traj = simulate_extremal(&q0, &AdjointState::new(lx, ly, ltheta, lbeta), duration, &opts)?;
    let times: Vec<String> = traj.switch_times().iter().map(|t| format!("{t:.3}")).collect();
    let summary = format!("switches at [{}] | {}", times.join(", "), describe(&traj));
    draw(&traj, (duration / 8.0).max(0.25), summary)
}
