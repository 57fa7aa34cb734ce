//! System and adjoint right-hand sides, the Hamiltonian, switching functions,
//! and a fixed-step RK4 integrator of the joint 8-dimensional flow.
//!
//! The integrator is the verification oracle for every closed form in the
//! crate, so it is deliberately plain: fixed step, no adaptivity, controls
//! re-evaluated at every substage.

use crate::error::{Error, Result};
use crate::model::{AdjointState, Configuration, Control, ExtremalConstants, SwitchingValues, TrajectorySample};

/// Default integrator step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Largest exponent magnitude accepted by [`lambda_beta_quadrature`].
pub const EXPONENT_CAP: f64 = 700.0;

/// `(dx, dy, dtheta, dbeta)` for the car with one trailer.
pub fn system_derivative(q: &Configuration, u: &Control) -> [f64; 4] {
    [
        u.v * q.theta.cos(),
        u.v * q.theta.sin(),
        u.omega,
        -u.v * q.beta.sin() + u.omega,
    ]
}

/// `(dlx, dly, dltheta, dlbeta)`: minus the state gradient of the Hamiltonian.
pub fn adjoint_derivative(q: &Configuration, lambda: &AdjointState, u: &Control) -> [f64; 4] {
    [
        0.0,
        0.0,
        u.v * (lambda.lx * q.theta.sin() - lambda.ly * q.theta.cos()),
        u.v * lambda.lbeta * q.beta.cos(),
    ]
}

pub fn hamiltonian(q: &Configuration, lambda: &AdjointState, u: &Control) -> f64 {
    u.v * (lambda.lx * q.theta.cos() + lambda.ly * q.theta.sin() - lambda.lbeta * q.beta.sin())
        + u.omega * (lambda.ltheta + lambda.lbeta)
}

pub fn switching(q: &Configuration, lambda: &AdjointState) -> SwitchingValues {
    SwitchingValues {
        phi_v: lambda.lx * q.theta.cos() + lambda.ly * q.theta.sin() - lambda.lbeta * q.beta.sin(),
        phi_omega: lambda.ltheta + lambda.lbeta,
    }
}

/// Common factor of the switching-function derivatives:
/// `d(phi_v)/dt = -omega * g` and `d(phi_omega)/dt = v * g`.
pub fn switching_rate_factor(q: &Configuration, lambda: &AdjointState) -> f64 {
    lambda.lx * q.theta.sin() - lambda.ly * q.theta.cos() + lambda.lbeta * q.beta.cos()
}

/// `ltheta = c1*y - c2*x + c3`.
pub fn lambda_theta_affine(c: &ExtremalConstants, x: f64, y: f64) -> f64 {
    c.c1 * y - c.c2 * x + c.c3
}

/// Feedback law `(t, q, lambda) -> u`.
pub trait ControlLaw {
    fn control(&self, t: f64, q: &Configuration, lambda: &AdjointState) -> Control;
}

impl<F> ControlLaw for F
where
    F: Fn(f64, &Configuration, &AdjointState) -> Control,
{
    fn control(&self, t: f64, q: &Configuration, lambda: &AdjointState) -> Control {
        self(t, q, lambda)
    }
}

/// Open-loop constant control.
#[derive(Debug, Clone, Copy)]
pub struct ConstantControl(pub Control);

impl ControlLaw for ConstantControl {
    fn control(&self, _t: f64, _q: &Configuration, _lambda: &AdjointState) -> Control {
        self.0
    }
}

/// Bang-bang law maximizing the Hamiltonian: `v = sgn(phi_v)`, `omega = sgn(phi_omega)`.
///
/// A vanishing switching function yields a zero control component.
#[derive(Debug, Clone, Copy, Default)]
pub struct BangBangLaw;

impl ControlLaw for BangBangLaw {
    fn control(&self, _t: f64, q: &Configuration, lambda: &AdjointState) -> Control {
        let sw = switching(q, lambda);
        Control::new(sign0(sw.phi_v), sign0(sw.phi_omega))
    }
}

pub(crate) fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Joint state `(q, lambda)` as an 8-vector.
pub type State8 = [f64; 8];

pub fn pack(q: &Configuration, l: &AdjointState) -> State8 {
    [q.x, q.y, q.theta, q.beta, l.lx, l.ly, l.ltheta, l.lbeta]
}

pub fn unpack(s: &State8) -> (Configuration, AdjointState) {
    (
        Configuration::new(s[0], s[1], s[2], s[3]),
        AdjointState::new(s[4], s[5], s[6], s[7]),
    )
}

fn rhs<L: ControlLaw + ?Sized>(t: f64, s: &State8, law: &L) -> State8 {
    let (q, l) = unpack(s);
    let u = law.control(t, &q, &l);
    let dq = system_derivative(&q, &u);
    let dl = adjoint_derivative(&q, &l, &u);
    [dq[0], dq[1], dq[2], dq[3], dl[0], dl[1], dl[2], dl[3]]
}

/// One classic RK4 step of size `h` (which may be negative).
pub fn rk4_step<L: ControlLaw + ?Sized>(t: f64, s: &State8, h: f64, law: &L) -> State8 {
    let axpy = |a: &State8, k: &State8, c: f64| -> State8 {
        let mut o = *a;
        for i in 0..8 {
            o[i] += c * k[i];
        }
        o
    };
    let k1 = rhs(t, s, law);
    let k2 = rhs(t + 0.5 * h, &axpy(s, &k1, 0.5 * h), law);
    let k3 = rhs(t + 0.5 * h, &axpy(s, &k2, 0.5 * h), law);
    let k4 = rhs(t + h, &axpy(s, &k3, h), law);
    let mut o = *s;
    for i in 0..8 {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

pub(crate) fn sample_at<L: ControlLaw + ?Sized>(t: f64, s: &State8, law: &L) -> TrajectorySample {
    let (q, l) = unpack(s);
    let u = law.control(t, &q, &l);
    TrajectorySample::new(t, q, l, u)
}

/// Step count and final partial step covering `duration` with nominal step `h`.
pub(crate) fn step_plan(duration: f64, h: f64) -> (usize, f64) {
    let full = (duration / h).floor();
    let rem = duration - full * h;
    if rem <= 1e-12 * h.max(duration) {
        (full as usize, h)
    } else {
        (full as usize + 1, rem)
    }
}

/// Integrates the joint system from `(q0, lambda0)` for `duration` with step `h`.
///
/// Samples are recorded at `t = 0`, after every step, and exactly at `duration`.
pub fn integrate_numeric<L: ControlLaw + ?Sized>(
    q0: &Configuration,
    lambda0: &AdjointState,
    law: &L,
    duration: f64,
    h: f64,
) -> Result<Vec<TrajectorySample>> {
    if !(duration > 0.0) || !(h > 0.0) || h > duration {
        return Err(Error::InvalidParameter(format!(
            "integration needs duration > 0 and 0 < h <= duration (duration = {duration}, h = {h})"
        )));
    }
    let (n, last) = step_plan(duration, h);
    let mut s = pack(q0, lambda0);
    let mut out = Vec::with_capacity(n + 1);
    out.push(sample_at(0.0, &s, law));
    for i in 0..n {
        let t = i as f64 * h;
        let step = if i + 1 == n { last } else { h };
        s = rk4_step(t, &s, step, law);
        let t_next = if i + 1 == n { duration } else { (i + 1) as f64 * h };
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t_next, what: format!("state {s:?}") });
        }
        out.push(sample_at(t_next, &s, law));
    }
    Ok(out)
}

/// Result of the trapezoid evaluation of `lbeta = c4 * exp(int v cos(beta))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaBetaQuadrature {
    pub values: Vec<f64>,
    /// The exponent was clamped to [`EXPONENT_CAP`] somewhere.
    pub capped: bool,
}

/// Evaluates `lbeta(t) = c4 * exp(int_0^t v cos(beta) dtau)` along samples with
/// the trapezoid rule on the exponent.
pub fn lambda_beta_quadrature(samples: &[TrajectorySample], c4: f64) -> LambdaBetaQuadrature {
    let mut values = Vec::with_capacity(samples.len());
    let mut exponent = 0.0;
    let mut capped = false;
    for (i, s) in samples.iter().enumerate() {
        if i > 0 {
            let p = &samples[i - 1];
            let f0 = p.u.v * p.q.beta.cos();
            let f1 = s.u.v * s.q.beta.cos();
            exponent += 0.5 * (s.t - p.t) * (f0 + f1);
        }
        let e = if exponent.abs() > EXPONENT_CAP {
            capped = true;
            EXPONENT_CAP.copysign(exponent)
        } else {
            exponent
        };
        values.push(if c4 == 0.0 { 0.0 } else { c4 * e.exp() });
    }
    LambdaBetaQuadrature { values, capped }
}
