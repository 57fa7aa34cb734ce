//! Multi-segment extremals: the adjoint flow followed automatically with
//! switching-event detection, and scripted concatenations of primitives.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    integrate_numeric, lambda_theta_affine, pack, rk4_step, sign0, switching, switching_rate_factor, unpack,
    ConstantControl,
};
use crate::error::{Error, Result};
use crate::model::{
    AdjointState, Configuration, Control, ExitReason, ExtremalConstants, Line, MergeBranch, Segment, SegmentKind,
    SwitchingValues, Trajectory,
};
use crate::regular::{regular_segment, regular_state};
use crate::singular::{
    merge_manifold_config, merging_band_exit, merging_curve_from, merging_feasible, phi_v_singular_scaled,
    propagate_phi_omega_singular, singular_seed, snap_onto_line, MergeStart, SingularArcState, DEFAULT_EPS_MERGE,
};

pub const DEFAULT_EPS_SWITCH: f64 = 1e-9;
/// Bound on a switching function's rate for a zero to count as persistent.
pub const DWELL_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_SWITCHES: usize = 1000;
/// Switching events are localized to this resolution in time.
pub const EVENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Signs of `(v, omega)`; a 0 marks a component sitting on a transversal zero.
    Regular(i8, i8),
    PhiVSingular,
    PhiOmegaSingular,
    Straight,
    Abnormal,
}

/// Local evidence that a zero of a switching function persists.
///
/// Over the control square, `|d(phi_v)/dt| = |omega*g|` and
/// `|d(phi_omega)/dt| = |v*g|`, so `|g|` bounds both rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowEvidence {
    pub rate_bound: f64,
    /// `|ltheta|` and `|lbeta|`, used to recognize straight motion on the line.
    pub lambda_theta: f64,
    pub lambda_beta: f64,
}

impl WindowEvidence {
    pub fn at(q: &Configuration, lambda: &AdjointState) -> Self {
        Self {
            rate_bound: switching_rate_factor(q, lambda).abs(),
            lambda_theta: lambda.ltheta.abs(),
            lambda_beta: lambda.lbeta.abs(),
        }
    }
}

fn sign_i8(x: f64, eps: f64) -> i8 {
    if x > eps {
        1
    } else if x < -eps {
        -1
    } else {
        0
    }
}

/// Classifies the control regime from switching values and dwell evidence.
///
/// A switching function counts as identically zero only if it and its rate
/// bound are both small; an isolated zero is a switch.
pub fn classify_regime(sw: SwitchingValues, lambda: &AdjointState, eps_switch: f64, ev: &WindowEvidence) -> Regime {
    let persistent = ev.rate_bound <= DWELL_TOL;
    let v_zero = sw.phi_v.abs() <= eps_switch;
    let w_zero = sw.phi_omega.abs() <= eps_switch;
    if lambda.lx == 0.0 && lambda.ly == 0.0 && lambda.lbeta == 0.0 && lambda.ltheta != 0.0 {
        return Regime::PhiVSingular;
    }
    match (v_zero && persistent, w_zero && persistent) {
        (true, true) => Regime::Abnormal,
        (true, false) => Regime::PhiVSingular,
        (false, true) => {
            if ev.lambda_theta <= DWELL_TOL && ev.lambda_beta <= DWELL_TOL {
                Regime::Straight
            } else {
                Regime::PhiOmegaSingular
            }
        }
        (false, false) => Regime::Regular(sign_i8(sw.phi_v, eps_switch), sign_i8(sw.phi_omega, eps_switch)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateOptions {
    /// Sample spacing, and the integrator step on numerically integrated arcs.
    pub h: f64,
    pub eps_switch: f64,
    pub eps_merge: f64,
    pub max_switches: usize,
    /// Linear velocity used on `phi_v`-singular stretches where it is free.
    pub phi_v_singular_v: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            h: crate::dynamics::DEFAULT_STEP,
            eps_switch: DEFAULT_EPS_SWITCH,
            eps_merge: DEFAULT_EPS_MERGE,
            max_switches: DEFAULT_MAX_SWITCHES,
            phi_v_singular_v: 0.0,
        }
    }
}

impl SimulateOptions {
    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 1e-2) {
            return Err(Error::InvalidParameter(format!("step h must lie in (0, 1e-2], got {}", self.h)));
        }
        if !(self.eps_switch >= 0.0) || !(self.eps_merge > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if !(self.phi_v_singular_v.abs() <= 1.0) {
            return Err(Error::InvalidParameter(format!("phi_v-singular v must lie in [-1, 1], got {}", self.phi_v_singular_v)));
        }
        Ok(())
    }
}

/// Picks bang controls for the next regular stretch. Components whose
/// switching function is too small to trust are decided by looking a short
/// time ahead along each candidate.
fn choose_controls(
    q: &Configuration,
    lambda: &AdjointState,
    c: &ExtremalConstants,
    sw: SwitchingValues,
    undecided: f64,
) -> Result<(f64, f64)> {
    let pick = |phi: f64| if phi.abs() > undecided { vec![sign0(phi)] } else { vec![1.0, -1.0] };
    let (vs, ws) = (pick(sw.phi_v), pick(sw.phi_omega));
    if vs.len() == 1 && ws.len() == 1 {
        return Ok((vs[0], ws[0]));
    }
    let mut best = (f64::NEG_INFINITY, vs[0], ws[0]);
    for &v in &vs {
        for &w in &ws {
            let mut score = f64::INFINITY;
            for delta in [1e-5, 1e-4, 1e-3] {
                let (qd, ld) = regular_state(q, lambda, c, v, w, delta)?;
                let s = switching(&qd, &ld);
                let mut m = f64::INFINITY;
                if vs.len() > 1 {
                    m = m.min(v * s.phi_v);
                }
                if ws.len() > 1 {
                    m = m.min(w * s.phi_omega);
                }
                score = score.min(m / delta);
            }
            if score > best.0 {
                best = (score, v, w);
            }
        }
    }
    Ok((best.1, best.2))
}

/// Closed-form regular stretch from `(q, lambda)` that stops at the first
/// sign change of `v*phi_v` or `omega*phi_omega`, or after `max_dt`.
fn regular_stretch(
    q: &Configuration,
    lambda: &AdjointState,
    c: &ExtremalConstants,
    v: f64,
    omega: f64,
    max_dt: f64,
    h: f64,
) -> Result<(Segment, bool)> {
    let violated = |tau: f64| -> Result<bool> {
        let (qt, lt) = regular_state(q, lambda, c, v, omega, tau)?;
        let s = switching(&qt, &lt);
        Ok(v * s.phi_v < 0.0 || omega * s.phi_omega < 0.0)
    };
    let mut lo = 0.0;
    let mut end = max_dt;
    let mut switched = false;
    let mut k = 1;
    loop {
        let tau = (k as f64 * h).min(max_dt);
        if violated(tau)? {
            let mut hi = tau;
            while hi - lo > EVENT_TOL {
                let mid = 0.5 * (lo + hi);
                if violated(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            end = hi;
            switched = true;
            break;
        }
        if tau >= max_dt {
            break;
        }
        lo = tau;
        k += 1;
    }
    let mut seg = regular_segment(q, lambda, v, omega, end, h)?;
    // keep the global c3 rather than the one re-derived from rounded samples
    seg.constants = ExtremalConstants::new(c.c1, c.c2, c.c3, lambda.lbeta);
    if switched {
        seg.exit = ExitReason::Switch;
    }
    Ok((seg, switched))
}

fn constant_control_segment(
    kind: SegmentKind,
    q: &Configuration,
    lambda: &AdjointState,
    u: Control,
    dt: f64,
    h: f64,
) -> Result<Segment> {
    let samples = integrate_numeric(q, lambda, &ConstantControl(u), dt, h.min(dt))?;
    Ok(Segment::new(kind, samples, ExitReason::Duration, ExtremalConstants::from_seed(q, lambda)))
}

/// Appends `seg` to `traj`, shifting it to start at the trajectory's end time.
/// Returns false (and drops it) when it has fewer than two samples.
fn append(traj: &mut Trajectory, mut seg: Segment) -> bool {
    if seg.samples.len() < 2 {
        return false;
    }
    let t0 = traj.segments.last().map_or(0.0, |s| s.t_end);
    seg.shift_time(t0 - seg.t_start);
    traj.segments.push(seg);
    true
}

/// Follows the extremal through `(q0, lambda0)` for `duration`.
///
/// Regular stretches use the closed forms between events; singular stretches
/// are integrated. More than `max_switches` events truncate the run and set
/// the trajectory's `truncated` flag.
pub fn simulate_extremal(
    q0: &Configuration,
    lambda0: &AdjointState,
    duration: f64,
    options: &SimulateOptions,
) -> Result<Trajectory> {
    options.validate()?;
    if lambda0.is_zero() {
        return Err(Error::InvalidParameter("lambda0 must be nonzero".into()));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidParameter(format!("duration must be positive, got {duration}")));
    }
    if !q0.is_finite() || !lambda0.to_array().iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("initial state must be finite".into()));
    }
    let c = ExtremalConstants::from_seed(q0, lambda0);
    let mut traj = Trajectory::new(c);
    let (mut q, mut lam) = (*q0, *lambda0);
    let mut t = 0.0;
    let mut events = 0usize;
    let mut force_regular = false;
    let mut snap: Option<f64> = None;
    let h = options.h;

    while duration - t > EVENT_TOL {
        let rem = duration - t;
        let sw = switching(&q, &lam);
        let regime = if force_regular {
            Regime::Regular(0, 0)
        } else {
            classify_regime(sw, &lam, options.eps_switch, &WindowEvidence::at(&q, &lam))
        };
        let undecided = if force_regular { DWELL_TOL * sw.phi_v.abs().max(1.0) } else { options.eps_switch };
        force_regular = false;
        // each branch yields the segment, the state to continue from, and whether an event ended it
        let (mut seg, next, event, next_snap) = match regime {
            Regime::Straight | Regime::PhiVSingular | Regime::Abnormal => {
                let (kind, u) = match regime {
                    Regime::Straight => (SegmentKind::Straight, Control::new(sign0(sw.phi_v), 0.0)),
                    Regime::PhiVSingular => {
                        let free = lam.lbeta == 0.0 && lam.lx == 0.0 && lam.ly == 0.0;
                        let v = if free { options.phi_v_singular_v } else { 0.0 };
                        (SegmentKind::PhiVSingular, Control::new(v, sign0(sw.phi_omega)))
                    }
                    _ => (SegmentKind::PhiVSingular, Control::new(0.0, 1.0)),
                };
                let seg = constant_control_segment(kind, &q, &lam, u, rem, h)?;
                let last = *seg.last();
                (seg, (last.q, last.lambda), false, None)
            }
            Regime::PhiOmegaSingular => {
                let seg_c = ExtremalConstants::new(c.c1, c.c2, c.c3, lam.lbeta);
                let start = SingularArcState::new(q, lam.ltheta, sw.phi_v)?;
                let arc = propagate_phi_omega_singular(&start, &seg_c, rem, h, options.eps_merge)?;
                let exit = arc.segment.exit;
                force_regular = matches!(exit, ExitReason::Saturation | ExitReason::SignLoss);
                let mut seg = arc.segment;
                seg.constants = seg_c;
                (seg, arc.end, exit != ExitReason::Duration, arc.snap)
            }
            Regime::Regular(..) => {
                let (v, w) = choose_controls(&q, &lam, &c, sw, undecided)?;
                let (seg, switched) = regular_stretch(&q, &lam, &c, v, w, rem, h)?;
                let last = *seg.last();
                (seg, (last.q, last.lambda), switched, None)
            }
        };
        if seg.samples.len() >= 2 {
            seg.joint_snap = snap.take();
            t += seg.duration();
            append(&mut traj, seg);
        }
        snap = snap.or(next_snap);
        (q, lam) = next;
        if !event {
            break;
        }
        events += 1;
        if events > options.max_switches {
            traj.truncated = true;
            if let Some(last) = traj.segments.last_mut() {
                last.exit = ExitReason::Truncated;
            }
            break;
        }
    }
    Ok(traj)
}

/// How the adjoint at the script's start is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Seed {
    /// An explicit adjoint vector.
    Adjoint { lambda: AdjointState },
    /// Start of a `phi_omega`-singular arc with the given `ltheta` and `phi_v`.
    Singular { lambda_theta: f64, phi_v: f64 },
    /// The adjoint of the merging curve that approaches its line from `q0`.
    MergeApproach { sigma: f64 },
}

/// A regular arc prepended to the script so that it ends exactly at the
/// seeded start; found by integrating the joint system backward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadIn {
    pub v: f64,
    pub omega: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Directive {
    /// Follow the current adjoint with event detection.
    Auto { duration: f64 },
    /// A bang primitive; the current adjoint is continued, or `(0, 0, omega, 0)` if none.
    Regular { v: f64, omega: f64, dt: f64 },
    /// Approach the line along a merging curve and touch down.
    MergeIn { sigma: f64 },
    /// Move straight along the heading.
    Straight { duration: f64 },
    /// Leave the line along a merging curve toward `side` (sign of `beta`),
    /// stopping at `|beta| = beta_end` or at the band edge.
    MergeOut {
        sigma: f64,
        side: f64,
        #[serde(default)]
        beta_end: Option<f64>,
    },
    /// Rotation-type singular stretch with constant `v`.
    PhiVSingular { omega: f64, v: f64, dt: f64 },
}

fn default_h() -> f64 {
    crate::dynamics::DEFAULT_STEP
}

fn default_eps_merge() -> f64 {
    DEFAULT_EPS_MERGE
}

/// An ordered list of directives plus the start state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionScript {
    #[serde(default)]
    pub q0: Configuration,
    #[serde(default)]
    pub seed: Option<Seed>,
    #[serde(default)]
    pub lead_in: Option<LeadIn>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_eps_merge")]
    pub eps_merge: f64,
    #[serde(default)]
    pub directives: Vec<Directive>,
}

impl CompositionScript {
    pub fn new(q0: Configuration, directives: Vec<Directive>) -> Self {
        Self { q0, seed: None, lead_in: None, h: default_h(), eps_merge: default_eps_merge(), directives }
    }

    pub fn run(&self) -> Result<Trajectory> {
        run_script(&self.q0, self)
    }
}

/// Heading-aligned frame (robot heading along the frame) of the merging
/// manifold through `q` on branch `sigma`.
fn manifold_frame(q: &Configuration, sigma: f64) -> Line {
    let phi = q.theta - sigma * 2.0 * q.beta;
    let d = sigma * 2.0 * q.beta.sin();
    let (px, py) = (q.x + d * phi.sin(), q.y - d * phi.cos());
    Line::through(px, py, phi)
}

/// Adjoint at `q` for the constants line `l`, on a `phi_omega`-singular arc.
fn merge_adjoint(l: &Line, q: &Configuration) -> AdjointState {
    let lt = lambda_theta_affine(&ExtremalConstants::new(l.c1, l.c2, l.c3, 0.0), q.x, q.y);
    AdjointState::new(l.c1, l.c2, lt, -lt)
}

fn seed_adjoint(q0: &Configuration, seed: &Seed) -> Result<AdjointState> {
    match *seed {
        Seed::Adjoint { lambda } => Ok(lambda),
        Seed::Singular { lambda_theta, phi_v } => {
            let (start, c) = singular_seed(q0, lambda_theta, phi_v)?;
            Ok(start.adjoint(&c))
        }
        Seed::MergeApproach { sigma } => {
            MergeBranch::new(sigma)?;
            if !merging_feasible(q0.beta) {
                return Err(Error::InfeasibleMerge(q0.beta));
            }
            let l = manifold_frame(q0, sigma).reversed();
            Ok(merge_adjoint(&l, q0))
        }
    }
}

/// Integrates `(q, lambda)` backward for `dt` under a constant bang control.
fn back_propagate(q: &Configuration, lambda: &AdjointState, u: Control, dt: f64, h: f64) -> (Configuration, AdjointState) {
    let law = ConstantControl(u);
    let (n, last) = crate::dynamics::step_plan(dt, h);
    let mut s = pack(q, lambda);
    for i in 0..n {
        let step = if i + 1 == n { last } else { h };
        s = rk4_step(0.0, &s, -step, &law);
    }
    unpack(&s)
}

/// Multiplies the adjoint carried by `seg` by `k > 0`.
fn scale_adjoint(seg: &mut Segment, k: f64) {
    for s in &mut seg.samples {
        s.lambda = s.lambda.scaled(k);
        s.sw.phi_v *= k;
        s.sw.phi_omega *= k;
        s.h *= k;
    }
    let c = seg.constants;
    seg.constants = ExtremalConstants::new(k * c.c1, k * c.c2, k * c.c3, k * c.c4);
}

struct ScriptState {
    traj: Trajectory,
    q: Configuration,
    lambda: Option<AdjointState>,
    /// Jump made at the last touchdown, charged to the next segment's start joint.
    snap: Option<f64>,
}

impl ScriptState {
    fn take_snap(&mut self) -> Option<f64> {
        self.snap.take()
    }

    fn push(&mut self, mut seg: Segment, reseeded: bool, snap: Option<f64>) {
        seg.reseeded = reseeded;
        if snap.is_some() {
            seg.joint_snap = snap;
        }
        if self.traj.segments.is_empty() {
            self.traj.constants = seg.constants;
        }
        let last = *seg.last();
        if append(&mut self.traj, seg) {
            self.q = last.q;
            self.lambda = Some(last.lambda);
        }
    }
}

/// Runs a composition script from `q0`. Directive failures report the
/// directive's index.
pub fn run_script(q0: &Configuration, script: &CompositionScript) -> Result<Trajectory> {
    let opts = SimulateOptions { h: script.h, eps_merge: script.eps_merge, ..SimulateOptions::default() };
    opts.validate()?;
    let mut st = ScriptState { traj: Trajectory::default(), q: *q0, lambda: None, snap: None };
    if let Some(seed) = &script.seed {
        let lambda = seed_adjoint(q0, seed)?;
        st.traj.constants = ExtremalConstants::from_seed(q0, &lambda);
        st.lambda = Some(lambda);
    }
    if let Some(lead) = &script.lead_in {
        let lambda = st
            .lambda
            .ok_or_else(|| Error::InvalidParameter("lead_in needs a seed adjoint".into()))?;
        if !(lead.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("lead_in dt must be positive, got {}", lead.dt)));
        }
        let (qs, ls) = back_propagate(q0, &lambda, Control::new(lead.v, lead.omega), lead.dt, script.h.min(1e-3));
        let seg = regular_segment(&qs, &ls, lead.v, lead.omega, lead.dt, script.h)?;
        st.lambda = Some(ls);
        st.push(seg, false, None);
    }
    for (index, d) in script.directives.iter().enumerate() {
        run_directive(&mut st, d, &opts).map_err(|e| Error::Directive { index, reason: e.to_string() })?;
        if st.traj.truncated {
            break;
        }
    }
    Ok(st.traj)
}

fn run_directive(st: &mut ScriptState, d: &Directive, opts: &SimulateOptions) -> Result<()> {
    let h = opts.h;
    let q = st.q;
    match *d {
        Directive::Auto { duration } => {
            let lambda = st.lambda.ok_or_else(|| Error::InvalidParameter("auto needs an adjoint".into()))?;
            let sub = simulate_extremal(&q, &lambda, duration, opts)?;
            st.traj.truncated |= sub.truncated;
            let mut snap = st.take_snap();
            for seg in sub.segments {
                st.push(seg, false, snap.take());
            }
        }
        Directive::Regular { v, omega, dt } => {
            let (lambda, reseeded) = match st.lambda {
                Some(l) => (l, false),
                None => (AdjointState::new(0.0, 0.0, omega, 0.0), !st.traj.segments.is_empty()),
            };
            let seg = regular_segment(&q, &lambda, v, omega, dt, h)?;
            let snap = st.take_snap();
            st.push(seg, reseeded, snap);
        }
        Directive::MergeIn { sigma } => {
            let branch = MergeBranch::new(sigma)?;
            if !merging_feasible(q.beta) {
                return Err(Error::InfeasibleMerge(q.beta));
            }
            // continue the current adjoint if q already sits on its approach manifold
            let current = st.lambda.and_then(|l| {
                let c = ExtremalConstants::from_seed(&q, &l);
                let line = c.line()?;
                let frame = line.reversed();
                let (dd, da) = crate::singular::manifold_residuals(&frame, branch, &q);
                let consistent = dd.max(da) <= 1e-6 && (l.ltheta + l.lbeta).abs() <= 1e-6 * line.norm();
                consistent.then_some(line)
            });
            let reseeded = current.is_none();
            let line = current.unwrap_or_else(|| manifold_frame(&q, sigma).reversed());
            let curve = merging_curve_from(&line, -1.0, branch, MergeStart::Config(q), opts.eps_merge, h)?;
            let mut seg = curve.segment;
            scale_adjoint(&mut seg, line.norm());
            let end = *seg.last();
            let touched = snap_onto_line(&line, &end.q, -1.0);
            let lam = AdjointState::new(line.c1, line.c2, 0.0, 0.0);
            let snap = touched.distance(&end.q).max(lam.distance(&end.lambda));
            let snap_in = st.take_snap();
            st.push(seg, reseeded && !st.traj.segments.is_empty(), snap_in);
            st.q = touched;
            st.lambda = Some(lam);
            st.snap = Some(snap);
        }
        Directive::Straight { duration } => {
            if !(duration > 0.0) {
                return Err(Error::InvalidParameter(format!("straight duration must be positive, got {duration}")));
            }
            let current = st.lambda.filter(|l| {
                let scale = l.lx.hypot(l.ly);
                let tangent = l.lx * q.theta.sin() - l.ly * q.theta.cos();
                scale > 0.0
                    && l.ltheta.abs() <= 1e-6 * scale
                    && l.lbeta.abs() <= 1e-6 * scale
                    && tangent.abs() <= 1e-6 * scale
            });
            let reseeded = current.is_none() && !st.traj.segments.is_empty();
            let lambda = current.unwrap_or(AdjointState::new(q.theta.cos(), q.theta.sin(), 0.0, 0.0));
            let v = sign0(switching(&q, &lambda).phi_v);
            let seg = constant_control_segment(SegmentKind::Straight, &q, &lambda, Control::new(v, 0.0), duration, h)?;
            let snap = st.take_snap();
            st.push(seg, reseeded, snap);
        }
        Directive::MergeOut { sigma, side, beta_end } => {
            let branch = MergeBranch::new(sigma)?;
            if q.beta.sin().abs() > 1e-3 {
                return Err(Error::InvalidParameter(format!(
                    "merge_out needs a straightened trailer, |sin(beta)| = {}",
                    q.beta.sin().abs()
                )));
            }
            if let Some(b) = beta_end {
                if !merging_feasible(b) || b == 0.0 {
                    return Err(Error::InfeasibleMerge(b));
                }
            }
            let frame = Line::through(q.x, q.y, q.theta);
            // continue the adjoint if it already points along the heading with ltheta = 0
            let current = st.lambda.filter(|l| {
                let scale = l.lx.hypot(l.ly);
                scale > 0.0
                    && l.ltheta.abs() <= 1e-6 * scale
                    && l.lbeta.abs() <= 1e-6 * scale
                    && switching(&q, l).phi_v >= (1.0 - 1e-6) * scale
            });
            let reseeded = current.is_none();
            let scale = current.map_or(1.0, |l| l.lx.hypot(l.ly));
            let beta_s = side.signum() * opts.eps_merge.asin();
            let mut qs = merge_manifold_config(&frame, frame.station(q.x, q.y), beta_s, branch)?;
            qs.beta += q.beta - crate::model::wrap_angle(q.beta);
            let curve = merging_band_exit(&frame, 1.0, branch, MergeStart::Config(qs), beta_end, h)?;
            let mut seg = curve.segment;
            scale_adjoint(&mut seg, scale);
            let lam_s = merge_adjoint(&frame, &qs).scaled(scale);
            let lam_q = st.lambda.unwrap_or(lam_s);
            let snap = st.take_snap().unwrap_or(0.0).max(qs.distance(&q)).max(if reseeded { 0.0 } else { lam_s.distance(&lam_q) });
            st.push(seg, reseeded && !st.traj.segments.is_empty(), Some(snap));
        }
        Directive::PhiVSingular { omega, v, dt } => {
            if !(v.abs() <= 1.0) {
                return Err(Error::InvalidParameter(format!("v must lie in [-1, 1], got {v}")));
            }
            let current = st.lambda.filter(|l| l.lx == 0.0 && l.ly == 0.0 && l.lbeta == 0.0 && sign0(l.ltheta) == omega);
            let lt = current.map_or(omega, |l| l.ltheta);
            let seg = phi_v_singular_scaled(&q, lt, omega, &|_| v, dt, h)?;
            let reseeded = current.is_none() && !st.traj.segments.is_empty();
            let snap = st.take_snap();
            st.push(seg, reseeded, snap);
        }
    }
    Ok(())
}
