//! Domain types shared by every module.
//!
//! Lengths are in trailer-length units and the hitch sits on the robot axle,
//! so the kinematics carry unit coefficients throughout.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-component tolerance used when comparing configurations.
pub const CONFIG_EQ_TOL: f64 = 1e-9;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Robot pose plus trailer angle, `q = (x, y, theta, beta)`.
///
/// Angles are kept unwrapped so that closed forms such as `theta = omega*t + theta0`
/// stay continuous across primitives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub beta: f64,
}

impl Configuration {
    pub const fn new(x: f64, y: f64, theta: f64, beta: f64) -> Self {
        Self { x, y, theta, beta }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.beta.is_finite()
    }

    /// Largest per-component difference, angles compared after wrapping.
    pub fn distance(&self, other: &Self) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max(wrap_angle(self.theta - other.theta).abs())
            .max(wrap_angle(self.beta - other.beta).abs())
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.distance(other) <= tol
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.theta, self.beta]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// Controls `u = (v, omega)` in the square `[-1, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub v: f64,
    pub omega: f64,
}

impl Control {
    pub const fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn is_admissible(&self) -> bool {
        self.v.abs() <= 1.0 && self.omega.abs() <= 1.0
    }

    /// Corners of the control square plus the origin; a bilinear Hamiltonian
    /// attains its maximum over the square on this set.
    pub const CANDIDATES: [Control; 5] = [
        Control::new(1.0, 1.0),
        Control::new(1.0, -1.0),
        Control::new(-1.0, 1.0),
        Control::new(-1.0, -1.0),
        Control::new(0.0, 0.0),
    ];
}

/// Adjoint (costate) vector `(lx, ly, ltheta, lbeta)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdjointState {
    pub lx: f64,
    pub ly: f64,
    pub ltheta: f64,
    pub lbeta: f64,
}

impl AdjointState {
    pub const fn new(lx: f64, ly: f64, ltheta: f64, lbeta: f64) -> Self {
        Self { lx, ly, ltheta, lbeta }
    }

    pub fn is_zero(&self) -> bool {
        self.lx == 0.0 && self.ly == 0.0 && self.ltheta == 0.0 && self.lbeta == 0.0
    }

    pub fn norm_inf(&self) -> f64 {
        self.lx.abs().max(self.ly.abs()).max(self.ltheta.abs()).max(self.lbeta.abs())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self.lx - other.lx)
            .abs()
            .max((self.ly - other.ly).abs())
            .max((self.ltheta - other.ltheta).abs())
            .max((self.lbeta - other.lbeta).abs())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(k * self.lx, k * self.ly, k * self.ltheta, k * self.lbeta)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.lx, self.ly, self.ltheta, self.lbeta]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// Integration constants of the adjoint flow.
///
/// `lx = c1`, `ly = c2`, `ltheta = c1*y - c2*x + c3`, and `c4` is `lbeta` at
/// the reference time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtremalConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl ExtremalConstants {
    pub const fn new(c1: f64, c2: f64, c3: f64, c4: f64) -> Self {
        Self { c1, c2, c3, c4 }
    }

    /// Constants of the extremal through `(q0, lambda0)` at its reference time.
    pub fn from_seed(q0: &Configuration, lambda0: &AdjointState) -> Self {
        Self {
            c1: lambda0.lx,
            c2: lambda0.ly,
            c3: lambda0.ltheta - lambda0.lx * q0.y + lambda0.ly * q0.x,
            c4: lambda0.lbeta,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.c1 == 0.0 && self.c2 == 0.0 && self.c3 == 0.0 && self.c4 == 0.0
    }

    /// The line `c1*y - c2*x + c3 = 0` on which `ltheta` vanishes, if defined.
    pub fn line(&self) -> Option<Line> {
        Line::new(self.c1, self.c2, self.c3).ok()
    }
}

/// Switching functions: the coefficients of `v` and `omega` in the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SwitchingValues {
    pub phi_v: f64,
    pub phi_omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    RegularFL,
    RegularFR,
    RegularBL,
    RegularBR,
    PhiVSingular,
    PhiOmegaSingular,
    Straight,
}

impl SegmentKind {
    /// Regular kind for a bang control pair; `None` unless both are `+-1`.
    pub fn regular(v: f64, omega: f64) -> Option<Self> {
        match (v, omega) {
            (v, w) if v == 1.0 && w == 1.0 => Some(Self::RegularFL),
            (v, w) if v == 1.0 && w == -1.0 => Some(Self::RegularFR),
            (v, w) if v == -1.0 && w == 1.0 => Some(Self::RegularBL),
            (v, w) if v == -1.0 && w == -1.0 => Some(Self::RegularBR),
            _ => None,
        }
    }

    pub fn is_regular(self) -> bool {
        matches!(self, Self::RegularFL | Self::RegularFR | Self::RegularBL | Self::RegularBR)
    }

    /// Kinds along which `phi_omega` vanishes identically.
    pub fn is_phi_omega_singular(self) -> bool {
        matches!(self, Self::PhiOmegaSingular | Self::Straight)
    }

    /// Bang control pair of a regular kind.
    pub fn regular_controls(self) -> Option<(f64, f64)> {
        match self {
            Self::RegularFL => Some((1.0, 1.0)),
            Self::RegularFR => Some((1.0, -1.0)),
            Self::RegularBL => Some((-1.0, 1.0)),
            Self::RegularBR => Some((-1.0, -1.0)),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::RegularFL => "regular_fl",
            Self::RegularFR => "regular_fr",
            Self::RegularBL => "regular_bl",
            Self::RegularBR => "regular_br",
            Self::PhiVSingular => "phi_v_singular",
            Self::PhiOmegaSingular => "phi_omega_singular",
            Self::Straight => "straight",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            Self::RegularFL,
            Self::RegularFR,
            Self::RegularBL,
            Self::RegularBR,
            Self::PhiVSingular,
            Self::PhiOmegaSingular,
            Self::Straight,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// Why a segment ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitReason {
    /// The requested duration elapsed.
    Duration,
    /// `phi_v` or `phi_omega` changed sign.
    Switch,
    /// The singular control reached `|omega| = 1`.
    Saturation,
    /// `phi_v` reached zero on a singular arc.
    SignLoss,
    /// The arc reached the line tangentially and was snapped onto it.
    Touchdown,
    /// Too many switching events; the run was cut short.
    Truncated,
}

impl ExitReason {
    pub fn name(self) -> &'static str {
        match self {
            Self::Duration => "duration",
            Self::Switch => "switch",
            Self::Saturation => "saturation",
            Self::SignLoss => "sign_loss",
            Self::Touchdown => "touchdown",
            Self::Truncated => "truncated",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            Self::Duration,
            Self::Switch,
            Self::Saturation,
            Self::SignLoss,
            Self::Touchdown,
            Self::Truncated,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// One dense sample of state, adjoint and control.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectorySample {
    pub t: f64,
    pub q: Configuration,
    pub lambda: AdjointState,
    pub u: Control,
    pub sw: SwitchingValues,
    pub h: f64,
}

impl TrajectorySample {
    /// Builds a sample, computing switching values and the Hamiltonian.
    pub fn new(t: f64, q: Configuration, lambda: AdjointState, u: Control) -> Self {
        let sw = crate::dynamics::switching(&q, &lambda);
        let h = sw.phi_v * u.v + sw.phi_omega * u.omega;
        Self { t, q, lambda, u, sw, h }
    }
}

/// Sign branch of the merging-curve relations `d = sigma*2 sin(beta)`, `alpha = sigma*2 beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeBranch {
    pub sigma: f64,
}

impl MergeBranch {
    pub const PLUS: MergeBranch = MergeBranch { sigma: 1.0 };
    pub const MINUS: MergeBranch = MergeBranch { sigma: -1.0 };

    pub fn new(sigma: f64) -> Result<Self> {
        if sigma == 1.0 || sigma == -1.0 {
            Ok(Self { sigma })
        } else {
            Err(Error::InvalidParameter(format!("merge branch must be +1 or -1, got {sigma}")))
        }
    }
}

/// Merging-manifold metadata attached to a segment that claims it.
///
/// `frame` is the line oriented along the robot heading; relations are
/// measured against it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeInfo {
    pub frame: Line,
    pub branch: MergeBranch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: Vec<TrajectorySample>,
    pub exit: ExitReason,
    /// Adjoint constants in force on this segment.
    pub constants: ExtremalConstants,
    /// The adjoint was re-seeded at the start of this segment (scripted joints).
    pub reseeded: bool,
    /// Size of the state jump accepted at this segment's start joint.
    pub joint_snap: Option<f64>,
    pub merge: Option<MergeInfo>,
}

impl Segment {
    pub fn new(
        kind: SegmentKind,
        samples: Vec<TrajectorySample>,
        exit: ExitReason,
        constants: ExtremalConstants,
    ) -> Self {
        let t_start = samples.first().map_or(0.0, |s| s.t);
        let t_end = samples.last().map_or(0.0, |s| s.t);
        Self {
            kind,
            t_start,
            t_end,
            samples,
            exit,
            constants,
            reseeded: false,
            joint_snap: None,
            merge: None,
        }
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn first(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("segment has samples")
    }

    /// Shifts all times by `dt`.
    pub fn shift_time(&mut self, dt: f64) {
        self.t_start += dt;
        self.t_end += dt;
        for s in &mut self.samples {
            s.t += dt;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub constants: ExtremalConstants,
    pub segments: Vec<Segment>,
    /// Set when the composer gave up after too many switches.
    pub truncated: bool,
}

impl Trajectory {
    pub fn new(constants: ExtremalConstants) -> Self {
        Self { constants, segments: Vec::new(), truncated: false }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.segments.first(), self.segments.last()) {
            (Some(a), Some(b)) => b.t_end - a.t_start,
            _ => 0.0,
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = &TrajectorySample> {
        self.segments.iter().flat_map(|s| s.samples.iter())
    }

    pub fn last_sample(&self) -> Option<&TrajectorySample> {
        self.segments.last().map(|s| s.last())
    }

    /// Switching event times, i.e. joints between consecutive segments.
    pub fn switch_times(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.t_start).collect()
    }
}

/// The line `c1*y - c2*x + c3 = 0`, with direction `(c1, c2)`.
///
/// Positive signed distance lies to the left of the direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Line {
    pub fn new(c1: f64, c2: f64, c3: f64) -> Result<Self> {
        if c1 == 0.0 && c2 == 0.0 {
            return Err(Error::DegenerateLine);
        }
        Ok(Self { c1, c2, c3 })
    }

    /// Line through `(x, y)` with direction angle `phi`, scaled to unit normal.
    pub fn through(x: f64, y: f64, phi: f64) -> Self {
        let (c1, c2) = (phi.cos(), phi.sin());
        Self { c1, c2, c3: c2 * x - c1 * y }
    }

    pub fn norm(&self) -> f64 {
        self.c1.hypot(self.c2)
    }

    pub fn direction_angle(&self) -> f64 {
        self.c2.atan2(self.c1)
    }

    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        (self.c1 * y - self.c2 * x + self.c3) / self.norm()
    }

    /// Same geometric line with opposite orientation.
    pub fn reversed(&self) -> Self {
        Self { c1: -self.c1, c2: -self.c2, c3: -self.c3 }
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self { c1: self.c1 / n, c2: self.c2 / n, c3: self.c3 / n }
    }

    /// Oriented angle from the line direction to a heading, in `(-pi, pi]`.
    pub fn heading_angle(&self, theta: f64) -> f64 {
        wrap_angle(theta - self.direction_angle())
    }

    /// Point on the line at arclength `s` from the foot of the origin.
    pub fn point_at(&self, s: f64) -> (f64, f64) {
        let n = self.norm();
        let (ux, uy) = (self.c1 / n, self.c2 / n);
        // foot of the origin: move along the left normal (-uy, ux) by -d(0,0)
        let d0 = self.c3 / n;
        (-d0 * -uy + s * ux, -d0 * ux + s * uy)
    }

    /// Station (arclength coordinate) of the projection of `(x, y)`.
    pub fn station(&self, x: f64, y: f64) -> f64 {
        let n = self.norm();
        let (x0, y0) = self.point_at(0.0);
        ((x - x0) * self.c1 + (y - y0) * self.c2) / n
    }
}

/// Signed distance from `(x, y)` to `l`.
pub fn signed_distance(l: &Line, x: f64, y: f64) -> Result<f64> {
    if l.c1 == 0.0 && l.c2 == 0.0 {
        return Err(Error::DegenerateLine);
    }
    Ok(l.signed_distance(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-15);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-3.0 * PI / 2.0) - PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn signed_distance_examples() {
        let l = Line::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(signed_distance(&l, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(signed_distance(&l, 5.0, 1.0).unwrap(), 1.0);
        let l = Line::new(3.0, 4.0, 0.0).unwrap();
        assert!((signed_distance(&l, 0.0, -5.0).unwrap() + 3.0).abs() < 1e-15);
        assert_eq!(Line::new(0.0, 0.0, 1.0), Err(Error::DegenerateLine));
        let bad = Line { c1: 0.0, c2: 0.0, c3: 2.0 };
        assert_eq!(signed_distance(&bad, 1.0, 1.0), Err(Error::DegenerateLine));
    }

    #[test]
    fn line_geometry() {
        let l = Line::through(2.0, 1.0, 0.3);
        assert!(l.signed_distance(2.0, 1.0).abs() < 1e-15);
        let (px, py) = l.point_at(4.0);
        assert!(l.signed_distance(px, py).abs() < 1e-14);
        assert!((l.station(px, py) - 4.0).abs() < 1e-14);
        // left of the direction is positive
        let (nx, ny) = (-(0.3f64).sin(), 0.3f64.cos());
        assert!((l.signed_distance(2.0 + nx, 1.0 + ny) - 1.0).abs() < 1e-14);
        assert!((l.reversed().signed_distance(2.0 + nx, 1.0 + ny) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn constants_round_trip() {
        let q0 = Configuration::new(0.7, -1.3, 2.0, 0.1);
        let l0 = AdjointState::new(0.4, -0.9, 1.7, 0.2);
        let c = ExtremalConstants::from_seed(&q0, &l0);
        assert!((c.c1 * q0.y - c.c2 * q0.x + c.c3 - l0.ltheta).abs() <= 4.0 * f64::EPSILON * 2.0);
        assert_eq!(c.c4, 0.2);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [SegmentKind::RegularFL, SegmentKind::Straight, SegmentKind::PhiVSingular] {
            assert_eq!(SegmentKind::from_name(k.name()), Some(k));
        }
        assert_eq!(SegmentKind::regular(-1.0, 1.0), Some(SegmentKind::RegularBL));
        assert_eq!(SegmentKind::regular(0.0, 1.0), None);
    }
}
