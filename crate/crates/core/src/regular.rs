//! Closed-form propagation of the four bang-bang regular primitives.
//!
//! With `v, omega` fixed at `+-1` the heading turns at unit rate, the robot
//! runs on a unit circle, and the trailer angle and `lbeta` have closed forms
//! parameterized by two constants `K1`, `K2`.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use crate::dynamics::lambda_theta_affine;
use crate::error::{Error, Result};
use crate::model::{
    wrap_angle, AdjointState, Configuration, Control, ExitReason, ExtremalConstants, Segment, SegmentKind,
    TrajectorySample,
};

/// Distance from the trailer equilibrium below which `K1` is replaced by a marker.
pub const EQUILIBRIUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum K1 {
    Finite(f64),
    /// `beta0` sits on the equilibrium `v*omega*pi/2`; `beta` and `lbeta` stay constant.
    Equilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularParams {
    pub v: f64,
    pub omega: f64,
    pub k1: K1,
    pub k2: f64,
}

fn check_bang(v: f64, omega: f64) -> Result<()> {
    if (v == 1.0 || v == -1.0) && (omega == 1.0 || omega == -1.0) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "regular primitives need v, omega in {{-1, +1}} (got v = {v}, omega = {omega})"
        )))
    }
}

/// `beta - v*omega*pi/2`, the offset from the trailer equilibrium.
fn equilibrium_offset(beta: f64, v: f64, omega: f64) -> f64 {
    beta - v * omega * FRAC_PI_2
}

/// `omega - v*sin(beta)`, evaluated as `2*omega*sin^2(delta/2)` so that it keeps
/// full relative precision next to the equilibrium.
fn trailer_rate(delta: f64, omega: f64) -> f64 {
    let s = (0.5 * delta).sin();
    2.0 * omega * s * s
}

/// `m = 1/K1 = (v - omega*tan(beta0/2))/2`, written to avoid cancellation near
/// the equilibrium.
fn inverse_k1(beta0: f64, v: f64, omega: f64) -> f64 {
    let delta0 = equilibrium_offset(beta0, v, omega);
    -omega * (0.5 * delta0).sin() / (SQRT_2 * (0.5 * beta0).cos())
}

pub fn regular_constants(beta0: f64, lambda_beta0: f64, v: f64, omega: f64) -> Result<RegularParams> {
    check_bang(v, omega)?;
    let delta0 = equilibrium_offset(beta0, v, omega);
    let k2 = lambda_beta0 * trailer_rate(delta0, omega);
    let k1 = if wrap_angle(delta0).abs() <= EQUILIBRIUM_TOL {
        K1::Equilibrium
    } else {
        K1::Finite(1.0 / inverse_k1(beta0, v, omega))
    };
    Ok(RegularParams { v, omega, k1, k2 })
}

/// Angle swept from the start by `(dt*m + 1, (dt - 2v)*m + 1)`.
///
/// That vector moves on a straight line missing the origin, so the sweep stays
/// below `pi` and `atan2` of (cross, dot) is branch-free. The cross product is
/// `2*v*dt*m^2` exactly.
fn swept_angle(m: f64, v: f64, dt: f64) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    if m.abs() <= 1.0 {
        let dot = (1.0 + dt * m) + (1.0 - 2.0 * v * m) * (1.0 + (dt - 2.0 * v) * m);
        (2.0 * v * dt * m * m).atan2(dot)
    } else {
        let k1 = 1.0 / m;
        let dot = k1 * (dt + k1) + (k1 - 2.0 * v) * (dt - 2.0 * v + k1);
        (2.0 * v * dt).atan2(dot)
    }
}

/// Trailer angle after `dt` on a regular primitive, continuous in `dt`.
pub fn beta_regular(beta0: f64, v: f64, omega: f64, dt: f64) -> Result<f64> {
    check_bang(v, omega)?;
    let m = inverse_k1(beta0, v, omega);
    Ok(beta0 + 2.0 * v * omega * swept_angle(m, v, dt))
}

/// Propagates `(q0, lbeta0)` by `dt` along the regular primitive `(v, omega)`.
///
/// Time is measured from the primitive's own start.
pub fn propagate_regular(
    q0: &Configuration,
    lambda_beta0: f64,
    v: f64,
    omega: f64,
    dt: f64,
) -> Result<(Configuration, f64)> {
    let params = regular_constants(q0.beta, lambda_beta0, v, omega)?;
    Ok(propagate_with(q0, lambda_beta0, &params, dt))
}

fn propagate_with(q0: &Configuration, lambda_beta0: f64, p: &RegularParams, dt: f64) -> (Configuration, f64) {
    let (v, omega) = (p.v, p.omega);
    let theta = omega * dt + q0.theta;
    let r = v * omega;
    let x = q0.x + r * (theta.sin() - q0.theta.sin());
    let y = q0.y - r * (theta.cos() - q0.theta.cos());
    let (beta, lbeta) = match p.k1 {
        K1::Equilibrium => (q0.beta, lambda_beta0),
        K1::Finite(_) => {
            let m = inverse_k1(q0.beta, v, omega);
            let sweep = 2.0 * v * omega * swept_angle(m, v, dt);
            let delta = equilibrium_offset(q0.beta, v, omega) + sweep;
            (q0.beta + sweep, p.k2 / trailer_rate(delta, omega))
        }
    };
    (Configuration::new(x, y, theta, beta), lbeta)
}

/// Full state `(q, lambda)` after `dt`, using the adjoint constants for the
/// `lx`, `ly`, `ltheta` components.
pub fn regular_state(
    q0: &Configuration,
    lambda0: &AdjointState,
    c: &ExtremalConstants,
    v: f64,
    omega: f64,
    dt: f64,
) -> Result<(Configuration, AdjointState)> {
    let (q, lbeta) = propagate_regular(q0, lambda0.lbeta, v, omega, dt)?;
    let lt = lambda_theta_affine(c, q.x, q.y);
    Ok((q, AdjointState::new(c.c1, c.c2, lt, lbeta)))
}

/// Samples a regular primitive every `sample_dt` (plus the endpoint) into a segment.
pub fn regular_segment(
    q0: &Configuration,
    lambda0: &AdjointState,
    v: f64,
    omega: f64,
    dt: f64,
    sample_dt: f64,
) -> Result<Segment> {
    let params = regular_constants(q0.beta, lambda0.lbeta, v, omega)?;
    if !(dt >= 0.0) || !(sample_dt > 0.0) {
        return Err(Error::InvalidParameter(format!("need dt >= 0 and sample_dt > 0 (dt = {dt}, sample_dt = {sample_dt})")));
    }
    let c = ExtremalConstants::from_seed(q0, lambda0);
    let u = Control::new(v, omega);
    let n = (dt / sample_dt).ceil().max(1.0) as usize;
    let mut samples = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let tau = if i == n { dt } else { i as f64 * sample_dt };
        if i > 0 && tau <= samples.last().map_or(0.0, |s: &TrajectorySample| s.t) {
            continue;
        }
        let (q, lb) = propagate_with(q0, lambda0.lbeta, &params, tau);
        let lt = lambda_theta_affine(&c, q.x, q.y);
        samples.push(TrajectorySample::new(tau, q, AdjointState::new(c.c1, c.c2, lt, lb), u));
    }
    let kind = SegmentKind::regular(v, omega).expect("checked bang controls");
    Ok(Segment::new(kind, samples, ExitReason::Duration, c))
}
