//! Validation of sampled trajectories against the maximum principle and the
//! closed-form identities of each primitive.

use serde::Serialize;

use crate::dynamics::{hamiltonian, lambda_beta_quadrature, lambda_theta_affine};
use crate::error::{Error, Result};
use crate::model::{Control, ExtremalConstants, Segment, Trajectory, TrajectorySample};
use crate::singular::{manifold_residuals, merging_feasible, singular_invariant};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToleranceSet {
    /// Pointwise algebraic identities.
    pub algebraic: f64,
    /// `lx`, `ly` drift.
    pub constancy: f64,
    /// Quadrature form of `lbeta`, relative.
    pub integral: f64,
    pub h_constancy: f64,
    /// Allowed shortfall of `H(u(t))` below the maximum over the control square.
    pub h_max: f64,
    /// Merging-manifold relations.
    pub manifold: f64,
    /// Largest allowed sample spacing.
    pub max_step: f64,
    /// State and adjoint jumps allowed at joints without a recorded snap.
    pub chaining: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self {
            algebraic: 1e-8,
            constancy: 1e-12,
            integral: 1e-5,
            h_constancy: 1e-6,
            h_max: 1e-9,
            manifold: 1e-6,
            max_step: 1e-2,
            chaining: 1e-9,
        }
    }
}

/// Names of the checks, in report order.
pub const CHECK_NAMES: [&str; 10] = [
    "nontriviality",
    "lxly_constancy",
    "ltheta_affine",
    "lbeta_exponential",
    "h_constancy",
    "control_maximization",
    "switching_consistency",
    "k2_invariance",
    "e_invariance",
    "merging_manifold",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    /// False when no segment of the trajectory is subject to the check.
    pub applicable: bool,
    pub max_residual: f64,
    /// Time of the largest residual.
    pub worst_t: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmpReport {
    /// Structural problems found before any identity was evaluated.
    pub structural: Option<String>,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

impl PmpReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    pub name: &'static str,
    pub applicable: bool,
    pub points: Vec<(f64, f64)>,
}

/// Segment ranges sharing one continuous adjoint; a re-seeded segment starts a new block.
fn blocks(traj: &Trajectory) -> Vec<&[Segment]> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, s) in traj.segments.iter().enumerate() {
        if i > start && s.reseeded {
            out.push(&traj.segments[start..i]);
            start = i;
        }
    }
    if start < traj.segments.len() {
        out.push(&traj.segments[start..]);
    }
    out
}

fn block_constants(block: &[Segment]) -> ExtremalConstants {
    let s = block[0].first();
    ExtremalConstants::from_seed(&s.q, &s.lambda)
}

fn scale(x: f64) -> f64 {
    x.abs().max(1.0)
}

fn hmax(s: &TrajectorySample) -> f64 {
    Control::CANDIDATES
        .iter()
        .map(|u| hamiltonian(&s.q, &s.lambda, u))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn check_index(name: &str) -> Result<usize> {
    CHECK_NAMES.iter().position(|n| *n == name).ok_or_else(|| Error::UnknownCheck(name.to_string()))
}

/// Dense residual trace of one check. Segments the check does not apply to
/// contribute no points.
pub fn residual_series(traj: &Trajectory, which: &str) -> Result<ResidualSeries> {
    let idx = check_index(which)?;
    residual_series_with(traj, idx, &ToleranceSet::default())
}

fn residual_series_with(traj: &Trajectory, idx: usize, tol: &ToleranceSet) -> Result<ResidualSeries> {
    let name = CHECK_NAMES[idx];
    let mut pts = Vec::new();
    let mut applicable = false;
    match name {
        "nontriviality" => {
            for s in traj.samples() {
                applicable = true;
                pts.push((s.t, if s.lambda.norm_inf() <= tol.constancy { 1.0 } else { 0.0 }));
            }
        }
        "lxly_constancy" | "ltheta_affine" | "h_constancy" => {
            for block in blocks(traj) {
                let c = block_constants(block);
                let h0 = block[0].first().h;
                for s in block.iter().flat_map(|g| g.samples.iter()) {
                    applicable = true;
                    let r = match name {
                        "lxly_constancy" => {
                            ((s.lambda.lx - c.c1).abs().max((s.lambda.ly - c.c2).abs())) / scale(c.c1.hypot(c.c2))
                        }
                        "ltheta_affine" => {
                            (s.lambda.ltheta - lambda_theta_affine(&c, s.q.x, s.q.y)).abs() / scale(c.c1.hypot(c.c2))
                        }
                        _ => (s.h - h0).abs(),
                    };
                    pts.push((s.t, r));
                }
            }
        }
        "lbeta_exponential" => {
            for seg in &traj.segments {
                applicable = true;
                // anchored at the largest |lbeta|: growth would amplify rounding at a tiny anchor
                let k = (0..seg.samples.len())
                    .max_by(|&a, &b| seg.samples[a].lambda.lbeta.abs().total_cmp(&seg.samples[b].lambda.lbeta.abs()))
                    .unwrap_or(0);
                let q = lambda_beta_quadrature(&seg.samples, 1.0);
                let c4 = seg.samples[k].lambda.lbeta / q.values[k];
                for (s, e) in seg.samples.iter().zip(q.values) {
                    let lb = c4 * e;
                    pts.push((s.t, (s.lambda.lbeta - lb).abs() / scale(lb)));
                }
            }
        }
        "control_maximization" => {
            for s in traj.samples() {
                applicable = true;
                pts.push((s.t, (hmax(s) - s.h).max(0.0)));
            }
        }
        "switching_consistency" => {
            let thr = tol.algebraic;
            for s in traj.samples() {
                applicable = true;
                let mut r: f64 = 0.0;
                if s.sw.phi_v.abs() > thr {
                    r = r.max(s.sw.phi_v.abs() - s.u.v * s.sw.phi_v);
                }
                if s.sw.phi_omega.abs() > thr {
                    r = r.max(s.sw.phi_omega.abs() - s.u.omega * s.sw.phi_omega);
                }
                pts.push((s.t, r));
            }
        }
        "k2_invariance" => {
            for seg in traj.segments.iter().filter(|s| s.kind.is_regular()) {
                applicable = true;
                let k2 = |s: &TrajectorySample| s.lambda.lbeta * (s.u.omega - s.u.v * s.q.beta.sin());
                let k0 = k2(seg.first());
                for s in &seg.samples {
                    pts.push((s.t, (k2(s) - k0).abs() / scale(k0)));
                }
            }
        }
        "e_invariance" => {
            for seg in traj.segments.iter().filter(|s| s.kind.is_phi_omega_singular()) {
                applicable = true;
                let pv = seg.first().sw.phi_v;
                let e = |s: &TrajectorySample| singular_invariant(s.lambda.ltheta, s.q.beta, pv);
                let e0 = e(seg.first());
                let norm = scale(pv * pv);
                for s in &seg.samples {
                    pts.push((s.t, (e(s) - e0).abs() / norm));
                }
            }
        }
        "merging_manifold" => {
            for seg in &traj.segments {
                let Some(info) = seg.merge else { continue };
                applicable = true;
                for s in &seg.samples {
                    let (dd, da) = manifold_residuals(&info.frame, info.branch, &s.q);
                    let mut r = dd.max(da);
                    // |omega| <= 1 and the band are hard constraints: report them at full size
                    if s.u.omega.abs() > 1.0 + 1e-12 {
                        r = r.max(s.u.omega.abs() - 1.0);
                    }
                    if !merging_feasible(s.q.beta) {
                        r = r.max(s.q.beta.sin().abs() - 0.5);
                    }
                    pts.push((s.t, r));
                }
            }
        }
        _ => unreachable!("check names are exhaustive"),
    }
    Ok(ResidualSeries { name, applicable, points: pts })
}

fn tolerance_of(name: &str, tol: &ToleranceSet) -> f64 {
    match name {
        "nontriviality" => 0.0,
        "lxly_constancy" => tol.constancy,
        "lbeta_exponential" => tol.integral,
        "h_constancy" => tol.h_constancy,
        "control_maximization" => tol.h_max,
        "merging_manifold" => tol.manifold,
        _ => tol.algebraic,
    }
}

/// Validates the sampling structure: sample counts, step sizes, monotone time,
/// and continuity at joints (up to recorded snaps; re-seeded joints may jump in
/// the adjoint).
pub fn structural_check(traj: &Trajectory, tol: &ToleranceSet) -> std::result::Result<(), String> {
    let mut prev: Option<&Segment> = None;
    for (i, seg) in traj.segments.iter().enumerate() {
        if seg.samples.len() < 2 {
            return Err(format!("segment {i} has {} samples, need at least 2", seg.samples.len()));
        }
        for (k, w) in seg.samples.windows(2).enumerate() {
            let dt = w[1].t - w[0].t;
            if !(dt > 0.0) {
                return Err(format!("segment {i}: time not increasing at sample {}", k + 1));
            }
            if dt > tol.max_step * (1.0 + 1e-9) {
                return Err(format!("segment {i}: sample step {dt} exceeds {}", tol.max_step));
            }
        }
        for s in &seg.samples {
            if !s.q.is_finite() || !s.lambda.to_array().iter().all(|v| v.is_finite()) {
                return Err(format!("segment {i}: non-finite sample at t = {}", s.t));
            }
        }
        if let Some(p) = prev {
            let (a, b) = (p.last(), seg.first());
            if (b.t - a.t).abs() > 1e-9 {
                return Err(format!("segment {i} starts at t = {} but the previous one ends at {}", b.t, a.t));
            }
            let allowed = tol.chaining + seg.joint_snap.unwrap_or(0.0) * (1.0 + 1e-6);
            let dq = a.q.distance(&b.q);
            if dq > allowed {
                return Err(format!("configuration jump {dq:e} at the start of segment {i}"));
            }
            let dl = a.lambda.distance(&b.lambda);
            if !seg.reseeded && dl > allowed * scale(a.lambda.norm_inf()) {
                return Err(format!("adjoint jump {dl:e} at the start of segment {i}"));
            }
        }
        prev = Some(seg);
    }
    Ok(())
}

/// Runs every check and aggregates the results.
pub fn check_pmp(traj: &Trajectory, tol: &ToleranceSet) -> PmpReport {
    if let Err(msg) = structural_check(traj, tol) {
        let checks = CHECK_NAMES
            .iter()
            .map(|name| CheckResult {
                name,
                applicable: false,
                max_residual: f64::NAN,
                worst_t: f64::NAN,
                tolerance: tolerance_of(name, tol),
                pass: false,
            })
            .collect();
        return PmpReport { structural: Some(msg), checks, pass: false };
    }
    let checks: Vec<CheckResult> = (0..CHECK_NAMES.len())
        .map(|idx| {
            let series = residual_series_with(traj, idx, tol).expect("valid index");
            let tolerance = tolerance_of(series.name, tol);
            let (worst_t, max_residual) =
                series.points.iter().copied().fold((f64::NAN, 0.0f64), |acc, (t, r)| if r > acc.1 { (t, r) } else { acc });
            CheckResult {
                name: series.name,
                applicable: series.applicable,
                max_residual,
                worst_t,
                tolerance,
                pass: max_residual <= tolerance,
            }
        })
        .collect();
    let pass = checks.iter().all(|c| c.pass);
    PmpReport { structural: None, checks, pass }
}
