//! Singular primitives: `phi_v`-singular rotations, `phi_omega`-singular arcs
//! under the feedback `omega = ltheta/|phi_v|`, the conserved quantity of those
//! arcs, and merging curves that carry the robot onto the line `ltheta = 0`
//! while straightening the trailer.

use crate::dynamics::{lambda_theta_affine, pack, rk4_step, sample_at, sign0, step_plan, unpack, ControlLaw, State8};
use crate::error::{Error, Result};
use crate::model::{
    wrap_angle, AdjointState, Configuration, Control, ExitReason, ExtremalConstants, Line, MergeBranch, MergeInfo,
    Segment, SegmentKind, TrajectorySample,
};

/// Default touchdown tolerance on `|sin(beta)|` (and on `|d|`, `|sin(alpha)|`).
pub const DEFAULT_EPS_MERGE: f64 = 1e-6;
/// Event times are refined to this resolution.
pub const EVENT_TIME_TOL: f64 = 1e-12;
/// Radicands down to this value are clamped to zero.
pub const RADICAND_CLAMP: f64 = 1e-12;
/// Manifold drift that marks a sigma/v pairing as dynamically inconsistent.
pub const MANIFOLD_DRIFT_LIMIT: f64 = 1e-4;
/// Longest merging run before giving up.
const MAX_MERGE_TIME: f64 = 200.0;

/// State at the start of a `phi_omega`-singular arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularArcState {
    pub q: Configuration,
    pub lambda_theta: f64,
    /// Constant along the arc, nonzero.
    pub phi_v: f64,
    pub v: f64,
}

impl SingularArcState {
    pub fn new(q: Configuration, lambda_theta: f64, phi_v: f64) -> Result<Self> {
        if phi_v == 0.0 {
            return Err(Error::ZeroPhiV);
        }
        Ok(Self { q, lambda_theta, phi_v, v: sign0(phi_v) })
    }

    /// Adjoint on the arc: `lbeta = -ltheta`.
    pub fn adjoint(&self, c: &ExtremalConstants) -> AdjointState {
        AdjointState::new(c.c1, c.c2, self.lambda_theta, -self.lambda_theta)
    }
}

/// Adjoint constants that make `q` the start of a `phi_omega`-singular arc with
/// the given `ltheta` and `phi_v`.
///
/// Solves `phi_omega = 0`, `d(phi_omega)/dt = 0` and the requested `phi_v` for
/// `(c1, c2)`; `c4` is `lbeta = -ltheta` at this point.
pub fn singular_seed(q: &Configuration, lambda_theta: f64, phi_v: f64) -> Result<(SingularArcState, ExtremalConstants)> {
    let start = SingularArcState::new(*q, lambda_theta, phi_v)?;
    let (st, ct) = q.theta.sin_cos();
    let a = phi_v - lambda_theta * q.beta.sin();
    let b = lambda_theta * q.beta.cos();
    let c1 = ct * a + st * b;
    let c2 = st * a - ct * b;
    let c3 = lambda_theta - c1 * q.y + c2 * q.x;
    Ok((start, ExtremalConstants::new(c1, c2, c3, -lambda_theta)))
}

/// Singular angular velocity `omega = ltheta/|phi_v|`, not clamped.
pub fn singular_omega(q: &Configuration, c: &ExtremalConstants, phi_v: f64) -> Result<f64> {
    if phi_v == 0.0 {
        return Err(Error::ZeroPhiV);
    }
    Ok(lambda_theta_affine(c, q.x, q.y) / phi_v.abs())
}

/// `E = ltheta^2/2 - phi_v*ltheta*sin(beta)`, constant on `phi_omega`-singular arcs.
pub fn singular_invariant(lambda_theta: f64, beta: f64, phi_v: f64) -> f64 {
    0.5 * lambda_theta * lambda_theta - phi_v * lambda_theta * beta.sin()
}

/// `ltheta` on a `phi_omega`-singular arc as a function of `beta`.
///
/// `branch` picks the sign of the square root.
pub fn lambda_theta_singular(lambda_theta0: f64, beta0: f64, beta: f64, phi_v: f64, branch: f64) -> Result<f64> {
    let sb = beta.sin();
    let radicand =
        lambda_theta0 * lambda_theta0 - 2.0 * phi_v * lambda_theta0 * beta0.sin() + phi_v * phi_v * sb * sb;
    let radicand = if radicand < 0.0 {
        if radicand < -RADICAND_CLAMP {
            return Err(Error::InconsistentArc(radicand));
        }
        0.0
    } else {
        radicand
    };
    Ok(phi_v * sb + branch.signum() * radicand.sqrt())
}

/// The `phi_v` that lets an arc starting at `(ltheta0, beta0)` reach `ltheta = 0`.
///
/// Returns 0 when `ltheta0 = 0`, the other alternative of the condition.
pub fn singphi_value(lambda_theta0: f64, beta0: f64) -> Result<f64> {
    if lambda_theta0 == 0.0 {
        return Ok(0.0);
    }
    let s = beta0.sin();
    if s.abs() < 1e-15 {
        return Err(Error::NoFinitePhiV(lambda_theta0));
    }
    Ok(lambda_theta0 / (2.0 * s))
}

/// True iff `beta` lies in the merging band `|sin(beta)| <= 1/2`, i.e.
/// `[-pi/6, pi/6]` or `[5pi/6, 7pi/6]`, boundaries included.
pub fn merging_feasible(beta: f64) -> bool {
    wrap_angle(beta).sin().abs() <= 0.5 + 1e-12
}

/// Configuration at station `s` of `l` on the merging manifold: signed distance
/// `sigma*2 sin(beta)` and heading angle `sigma*2 beta` relative to `l`.
pub fn merge_manifold_config(l: &Line, s: f64, beta: f64, branch: MergeBranch) -> Result<Configuration> {
    if l.c1 == 0.0 && l.c2 == 0.0 {
        return Err(Error::DegenerateLine);
    }
    if !merging_feasible(beta) {
        return Err(Error::InfeasibleMerge(beta));
    }
    let phi = l.direction_angle();
    let (px, py) = l.point_at(s);
    let d = branch.sigma * 2.0 * beta.sin();
    let (nx, ny) = (-phi.sin(), phi.cos());
    Ok(Configuration::new(px + d * nx, py + d * ny, phi + branch.sigma * 2.0 * beta, beta))
}

/// Residuals `(|d - sigma*2 sin(beta)|, |alpha - sigma*2 beta|)` against a heading-aligned frame.
pub fn manifold_residuals(frame: &Line, branch: MergeBranch, q: &Configuration) -> (f64, f64) {
    let d = frame.signed_distance(q.x, q.y);
    let alpha = frame.heading_angle(q.theta);
    (
        (d - branch.sigma * 2.0 * q.beta.sin()).abs(),
        wrap_angle(alpha - branch.sigma * 2.0 * q.beta).abs(),
    )
}

/// Control law on a `phi_omega`-singular arc: `v = sgn(phi_v)`, `omega = ltheta/|phi_v|`.
#[derive(Debug, Clone, Copy)]
struct SingularLaw {
    c: ExtremalConstants,
    phi_v: f64,
}

impl ControlLaw for SingularLaw {
    fn control(&self, _t: f64, q: &Configuration, _l: &AdjointState) -> Control {
        Control::new(sign0(self.phi_v), lambda_theta_affine(&self.c, q.x, q.y) / self.phi_v.abs())
    }
}

/// Result of marching an ODE until a duration elapses or an event fires.
struct March {
    samples: Vec<TrajectorySample>,
    /// Index of the event that fired, if any.
    event: Option<usize>,
}

/// Integrates with step `dir*h` from `s0`, stopping at `duration` (if given) or
/// when one of `events` goes from positive to nonpositive. Crossings are refined
/// by bisection to [`EVENT_TIME_TOL`]. `check` sees every accepted state.
///
/// With `singular` set, every accepted state is put back on `phi_omega = 0` by
/// resetting `lbeta = -ltheta`; off that surface `phi_omega` grows like `e^t`.
#[allow(clippy::too_many_arguments)]
fn march<L: ControlLaw>(
    s0: State8,
    law: &L,
    dir: f64,
    h: f64,
    duration: Option<f64>,
    singular: bool,
    events: &[&dyn Fn(&State8) -> f64],
    mut check: impl FnMut(&State8) -> Result<()>,
) -> Result<March> {
    let project = |mut s: State8| {
        if singular {
            s[7] = -s[6];
        }
        s
    };
    let horizon = duration.unwrap_or(MAX_MERGE_TIME);
    let (n, last) = step_plan(horizon, h);
    let mut s = s0;
    let mut t = 0.0;
    let mut samples = vec![sample_at(0.0, &s, law)];
    let mut armed: Vec<bool> = events.iter().map(|e| e(&s) > 0.0).collect();
    for i in 0..n {
        let step = if i + 1 == n { last } else { h };
        let next = project(rk4_step(t, &s, dir * step, law));
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t + dir * step, what: format!("state {next:?}") });
        }
        // earliest armed event crossing within this step
        let mut hit: Option<(usize, f64)> = None;
        for (k, e) in events.iter().enumerate() {
            if armed[k] && e(&next) <= 0.0 {
                let (mut lo, mut hi) = (0.0, step);
                while hi - lo > EVENT_TIME_TOL {
                    let mid = 0.5 * (lo + hi);
                    if e(&rk4_step(t, &s, dir * mid, law)) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if hit.is_none_or(|(_, tau)| hi < tau) {
                    hit = Some((k, hi));
                }
            }
        }
        if let Some((k, tau)) = hit {
            let s_ev = project(rk4_step(t, &s, dir * tau, law));
            check(&s_ev)?;
            let t_ev = t + dir * tau;
            if tau > 0.0 {
                samples.push(sample_at(t_ev, &s_ev, law));
            }
            return Ok(March { samples, event: Some(k) });
        }
        check(&next)?;
        t = if i + 1 == n { dir * horizon } else { dir * (i + 1) as f64 * h };
        s = next;
        samples.push(sample_at(t, &s, law));
        for (k, e) in events.iter().enumerate() {
            if !armed[k] && e(&s) > 0.0 {
                armed[k] = true;
            }
        }
    }
    if duration.is_none() {
        return Err(Error::InvalidParameter(format!("no terminating event within {MAX_MERGE_TIME} time units")));
    }
    Ok(March { samples, event: None })
}

/// Reverses a backward-time sample list into forward physical time starting at 0.
fn into_forward_time(mut samples: Vec<TrajectorySample>) -> Vec<TrajectorySample> {
    samples.reverse();
    let t0 = samples[0].t;
    for s in &mut samples {
        s.t -= t0;
    }
    samples
}

/// A `phi_v`-singular stretch: `omega = +-1`, `v` free, adjoint `(0, 0, omega, 0)`.
///
/// `dt = 0` gives a one-sample segment at `q0`.
pub fn phi_v_singular_segment(
    q0: &Configuration,
    omega: f64,
    v_profile: &dyn Fn(f64) -> f64,
    dt: f64,
    h: f64,
) -> Result<Segment> {
    phi_v_singular_scaled(q0, omega, omega, v_profile, dt, h)
}

/// As [`phi_v_singular_segment`] with adjoint `(0, 0, ltheta, 0)`; `omega = sgn(ltheta)`.
pub(crate) fn phi_v_singular_scaled(
    q0: &Configuration,
    lambda_theta: f64,
    omega: f64,
    v_profile: &dyn Fn(f64) -> f64,
    dt: f64,
    h: f64,
) -> Result<Segment> {
    if omega != 1.0 && omega != -1.0 {
        return Err(Error::InvalidParameter(format!("phi_v-singular arcs need omega = +-1, got {omega}")));
    }
    if !(dt >= 0.0) || !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("need dt >= 0 and h > 0 (dt = {dt}, h = {h})")));
    }
    let lambda = AdjointState::new(0.0, 0.0, lambda_theta, 0.0);
    let c = ExtremalConstants::from_seed(q0, &lambda);
    let law = |t: f64, _q: &Configuration, _l: &AdjointState| Control::new(v_profile(t).clamp(-1.0, 1.0), omega);
    let samples = if dt == 0.0 {
        vec![sample_at(0.0, &pack(q0, &lambda), &law)]
    } else {
        march(pack(q0, &lambda), &law, 1.0, h.min(dt), Some(dt), false, &[], |_| Ok(()))?.samples
    };
    Ok(Segment::new(SegmentKind::PhiVSingular, samples, ExitReason::Duration, c))
}

/// Outcome of [`propagate_phi_omega_singular`].
#[derive(Debug, Clone, PartialEq)]
pub struct SingularArc {
    pub segment: Segment,
    /// Final state, snapped onto the line when the arc touched down.
    pub end: (Configuration, AdjointState),
    /// Size of the touchdown snap, if any.
    pub snap: Option<f64>,
}

/// Integrates a `phi_omega`-singular arc for up to `dt`, stopping early on
/// saturation (`|omega| = 1`), sign loss of `phi_v`, or tangential touchdown on
/// the line `ltheta = 0` within `eps_merge`.
pub fn propagate_phi_omega_singular(
    start: &SingularArcState,
    c: &ExtremalConstants,
    dt: f64,
    h: f64,
    eps_merge: f64,
) -> Result<SingularArc> {
    if start.phi_v == 0.0 {
        return Err(Error::ZeroPhiV);
    }
    if !(dt > 0.0) || !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("need dt > 0 and h > 0 (dt = {dt}, h = {h})")));
    }
    let law = SingularLaw { c: *c, phi_v: start.phi_v };
    let lambda0 = start.adjoint(c);
    let s0 = pack(&start.q, &lambda0);
    let w0 = singular_omega(&start.q, c, start.phi_v)?;
    if w0.abs() > 1.0 + 1e-12 {
        return Err(Error::InitialSaturation(w0.abs()));
    }
    let line = c.line();
    let abs_phi = start.phi_v.abs();
    let v_sign = sign0(start.phi_v);
    let on_line = |s: &State8| -> f64 {
        let (q, _) = unpack(s);
        let lt = lambda_theta_affine(c, q.x, q.y) / abs_phi;
        let sa = line.map_or(1.0, |l| l.heading_angle(q.theta).sin().abs());
        lt.abs().max(sa)
    };
    let kind = if on_line(&s0) <= 1e-12 && lambda0.lbeta.abs() <= 1e-12 {
        SegmentKind::Straight
    } else {
        SegmentKind::PhiOmegaSingular
    };

    // starting on the saturation boundary and moving outward: zero-length arc
    if w0.abs() >= 1.0 - 1e-12 {
        let probe = rk4_step(0.0, &s0, h.min(dt) * 1e-3, &law);
        let (qp, _) = unpack(&probe);
        if lambda_theta_affine(c, qp.x, qp.y).abs() / abs_phi >= w0.abs() {
            let seg = Segment::new(kind, vec![sample_at(0.0, &s0, &law)], ExitReason::Saturation, *c);
            return Ok(SingularArc { segment: seg, end: (start.q, lambda0), snap: None });
        }
    }

    let saturation = |s: &State8| {
        let (q, _) = unpack(s);
        1.0 - lambda_theta_affine(c, q.x, q.y).abs() / abs_phi
    };
    let sign_loss = |s: &State8| {
        let (q, l) = unpack(s);
        v_sign * crate::dynamics::switching(&q, &l).phi_v
    };
    let touchdown = |s: &State8| on_line(s) - eps_merge;
    let events: [&dyn Fn(&State8) -> f64; 3] = [&saturation, &sign_loss, &touchdown];
    let m = march(s0, &law, 1.0, h.min(dt), Some(dt), true, &events, |_| Ok(()))?;
    let exit = match m.event {
        None => ExitReason::Duration,
        Some(0) => ExitReason::Saturation,
        Some(1) => ExitReason::SignLoss,
        Some(_) => ExitReason::Touchdown,
    };
    let last = *m.samples.last().expect("march yields samples");
    let mut end = (last.q, last.lambda);
    let mut snap = None;
    if exit == ExitReason::Touchdown {
        if let Some(l) = line {
            let snapped = snap_onto_line(&l, &last.q, v_sign);
            let lam = AdjointState::new(c.c1, c.c2, 0.0, 0.0);
            snap = Some(snapped.distance(&last.q).max(lam.distance(&last.lambda)));
            end = (snapped, lam);
        }
    }
    let segment = Segment::new(kind, m.samples, exit, *c);
    Ok(SingularArc { segment, end, snap })
}

/// Projects `q` onto `l` with trailer straight and heading tangent to `l`,
/// keeping the heading's orientation (along or against the line).
pub fn snap_onto_line(l: &Line, q: &Configuration, _v: f64) -> Configuration {
    let s = l.station(q.x, q.y);
    let (x, y) = l.point_at(s);
    let alpha = l.heading_angle(q.theta);
    let target = if alpha.cos() >= 0.0 { 0.0 } else { std::f64::consts::PI };
    let theta = q.theta + wrap_angle(target - alpha);
    let beta = q.beta - wrap_angle(q.beta - if q.beta.cos() >= 0.0 { 0.0 } else { std::f64::consts::PI });
    Configuration::new(x, y, theta, beta)
}

/// Direction of a merging run relative to physical time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeDirection {
    /// Forward time decreases `|beta|`: the robot approaches the line.
    Approach,
    /// Forward time increases `|beta|`: the robot departs from the line.
    Departure,
}

/// A merging curve in forward physical time.
#[derive(Debug, Clone, PartialEq)]
pub struct MergingCurve {
    pub segment: Segment,
    pub direction: MergeDirection,
    /// Heading-aligned frame the manifold relations are measured against.
    pub frame: Line,
    /// Largest manifold residual seen along the run.
    pub max_drift: f64,
}

struct MergeSetup {
    frame: Line,
    c: ExtremalConstants,
    s0: State8,
    law: SingularLaw,
    /// Time direction in which `|beta|` decreases.
    shrink_dir: f64,
}

fn merge_setup(l: &Line, v: f64, branch: MergeBranch, start: MergeStart) -> Result<MergeSetup> {
    if v != 1.0 && v != -1.0 {
        return Err(Error::InvalidParameter(format!("merging curves need v = +-1, got {v}")));
    }
    let l = Line::new(l.c1, l.c2, l.c3)?.normalized();
    let frame = if v > 0.0 { l } else { l.reversed() };
    let q0 = match start {
        MergeStart::Beta(beta) => merge_manifold_config(&frame, 0.0, beta, branch)?,
        MergeStart::Config(q) => {
            if !merging_feasible(q.beta) {
                return Err(Error::InfeasibleMerge(q.beta));
            }
            let (dd, da) = manifold_residuals(&frame, branch, &q);
            if dd.max(da) > 1e-6 {
                return Err(Error::InvalidParameter(format!(
                    "configuration is off the merging manifold (residuals {dd:e}, {da:e})"
                )));
            }
            q
        }
    };
    let lt = l.signed_distance(q0.x, q0.y);
    let lambda0 = AdjointState::new(l.c1, l.c2, lt, -lt);
    let c = ExtremalConstants::from_seed(&q0, &lambda0);
    let phi_v = crate::dynamics::switching(&q0, &lambda0).phi_v;
    let law = SingularLaw { c, phi_v: if phi_v == 0.0 { v } else { v * phi_v.abs() } };
    let u = law.control(0.0, &q0, &lambda0);
    let beta_rate = -u.v * q0.beta.sin() + u.omega;
    // d|sin(beta)|/dt has the sign of beta_rate * sin(2 beta)
    let shrink_dir = if beta_rate * (2.0 * q0.beta).sin() < 0.0 { 1.0 } else { -1.0 };
    Ok(MergeSetup { frame, c, s0: pack(&q0, &lambda0), law, shrink_dir })
}

/// Where a merging run starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MergeStart {
    /// The manifold point at station 0 of the heading frame with this `beta`.
    Beta(f64),
    /// A given configuration, which must lie on the manifold.
    Config(Configuration),
}

/// Integrates the merging feedback `omega = d(l)` from the manifold point at
/// `beta_start`, in the time direction that straightens the trailer, until
/// both `|sin(beta)|` and the distance to the line are within `eps_merge`.
///
/// `l` carries the adjoint line; the robot heading is aligned with `l` for
/// `v = +1` and opposed for `v = -1`. The returned segment runs in forward
/// physical time: an approach ends near the line, a departure starts there.
pub fn merging_curve(
    l: &Line,
    v: f64,
    branch: MergeBranch,
    beta_start: f64,
    eps_merge: f64,
    h: f64,
) -> Result<MergingCurve> {
    if beta_start == 0.0 {
        return Err(Error::InvalidParameter("merging curves need beta_start != 0".into()));
    }
    merging_curve_from(l, v, branch, MergeStart::Beta(beta_start), eps_merge, h)
}

/// [`merging_curve`] from an explicit start.
pub fn merging_curve_from(
    l: &Line,
    v: f64,
    branch: MergeBranch,
    start: MergeStart,
    eps_merge: f64,
    h: f64,
) -> Result<MergingCurve> {
    let setup = merge_setup(l, v, branch, start)?;
    let direction = if setup.shrink_dir > 0.0 { MergeDirection::Approach } else { MergeDirection::Departure };
    let frame = setup.frame;
    let merged = |s: &State8| {
        let q = unpack(s).0;
        q.beta.sin().abs().max(frame.signed_distance(q.x, q.y).abs()) - eps_merge
    };
    if merged(&setup.s0) <= 0.0 {
        let seg = Segment::new(
            SegmentKind::PhiOmegaSingular,
            vec![sample_at(0.0, &setup.s0, &setup.law)],
            ExitReason::Touchdown,
            setup.c,
        );
        return Ok(finish_merge(seg, direction, setup.frame, branch, 0.0));
    }
    let mut max_drift = 0.0f64;
    let m = march(setup.s0, &setup.law, setup.shrink_dir, h, None, true, &[&merged], |s| {
        let (q, _) = unpack(s);
        let (dd, da) = manifold_residuals(&frame, branch, &q);
        max_drift = max_drift.max(dd).max(da);
        if max_drift > MANIFOLD_DRIFT_LIMIT {
            Err(Error::BranchInconsistent { drift: max_drift, sigma: branch.sigma, v })
        } else {
            Ok(())
        }
    })?;
    let (samples, exit) = match direction {
        MergeDirection::Approach => (m.samples, ExitReason::Touchdown),
        MergeDirection::Departure => (into_forward_time(m.samples), ExitReason::Duration),
    };
    let seg = Segment::new(SegmentKind::PhiOmegaSingular, samples, exit, setup.c);
    Ok(finish_merge(seg, direction, frame, branch, max_drift))
}

fn finish_merge(
    mut segment: Segment,
    direction: MergeDirection,
    frame: Line,
    branch: MergeBranch,
    max_drift: f64,
) -> MergingCurve {
    segment.constants = ExtremalConstants::from_seed(&segment.first().q, &segment.first().lambda);
    segment.merge = Some(MergeInfo { frame, branch });
    MergingCurve { segment, direction, frame, max_drift }
}

/// The time-reversed merging run: from `start`, follow the direction in which
/// `|beta|` grows until the control saturates at `|omega| = 1`, i.e. the edge
/// of the merging band, or until `|beta|` reaches `beta_stop`.
pub fn merging_band_exit(
    l: &Line,
    v: f64,
    branch: MergeBranch,
    start: MergeStart,
    beta_stop: Option<f64>,
    h: f64,
) -> Result<MergingCurve> {
    let setup = merge_setup(l, v, branch, start)?;
    let grow_dir = -setup.shrink_dir;
    let direction = if grow_dir > 0.0 { MergeDirection::Departure } else { MergeDirection::Approach };
    let c = setup.c;
    let abs_phi = setup.law.phi_v.abs();
    let saturation = |s: &State8| {
        let (q, _) = unpack(s);
        1.0 - lambda_theta_affine(&c, q.x, q.y).abs() / abs_phi
    };
    let stop = beta_stop.map_or(f64::INFINITY, |b| b.sin().abs());
    let reached = |s: &State8| stop - unpack(s).0.beta.sin().abs();
    let mut max_drift = 0.0f64;
    let frame = setup.frame;
    let m = march(setup.s0, &setup.law, grow_dir, h, None, true, &[&saturation, &reached], |s| {
        let (q, _) = unpack(s);
        let (dd, da) = manifold_residuals(&frame, branch, &q);
        max_drift = max_drift.max(dd).max(da);
        if max_drift > MANIFOLD_DRIFT_LIMIT {
            Err(Error::BranchInconsistent { drift: max_drift, sigma: branch.sigma, v })
        } else {
            Ok(())
        }
    })?;
    let samples = if grow_dir > 0.0 { m.samples } else { into_forward_time(m.samples) };
    let exit = if grow_dir > 0.0 && m.event == Some(0) { ExitReason::Saturation } else { ExitReason::Duration };
    let seg = Segment::new(SegmentKind::PhiOmegaSingular, samples, exit, c);
    Ok(finish_merge(seg, direction, frame, branch, max_drift))
}
