//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trailer_pmp::checker::{check_pmp, ToleranceSet};
use trailer_pmp::composer::{simulate_extremal, CompositionScript, Directive, Seed, SimulateOptions};
use trailer_pmp::dynamics::{integrate_numeric, ConstantControl};
use trailer_pmp::regular::{propagate_regular, regular_constants, regular_segment};
use trailer_pmp::singular::{
    lambda_theta_singular, manifold_residuals, merging_band_exit, merging_curve, propagate_phi_omega_singular,
    singular_invariant, singular_seed, MergeDirection, MergeStart,
};
use trailer_pmp::*;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn bang(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

fn random_config(rng: &mut ChaCha8Rng) -> Configuration {
    Configuration::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-PI..PI), rng.gen_range(-PI..PI))
}

fn random_adjoint(rng: &mut ChaCha8Rng) -> AdjointState {
    loop {
        let l = AdjointState::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if l.norm_inf() > 1e-3 {
            return l;
        }
    }
}

struct RegularStats {
    oracle_err: f64,
    k2_err: f64,
    near_eq: usize,
}

/// Suites 1 and 2: closed-form regular primitives against RK4 at h = 1e-4.
fn regular_suite() -> RegularStats {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut stats = RegularStats { oracle_err: 0.0, k2_err: 0.0, near_eq: 0 };
    for i in 0..1000 {
        let (v, w) = (bang(&mut rng), bang(&mut rng));
        // every fifth seed sits next to the trailer equilibrium beta = v*omega*pi/2
        let beta0 = if i % 5 == 0 {
            stats.near_eq += 1;
            let off = 10f64.powf(rng.gen_range(-6.0..-2.0)) * bang(&mut rng);
            wrap_angle(v * w * FRAC_PI_2 + off)
        } else {
            PI - rng.gen_range(0.0..2.0 * PI)
        };
        let q0 = Configuration::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-PI..PI), beta0);
        let lb0 = rng.gen_range(-5.0..=5.0);
        let dt = rng.gen_range(0.0..=4.0);
        let k2 = regular_constants(beta0, lb0, v, w).unwrap().k2;
        let k2_of = |q: &Configuration, lb: f64| (lb * (w - v * q.beta.sin()) - k2).abs();
        if dt < 1e-4 {
            let (q, lb) = propagate_regular(&q0, lb0, v, w, dt).unwrap();
            stats.oracle_err = stats.oracle_err.max(q.distance(&q0)).max((lb - lb0).abs());
            continue;
        }
        let lam = AdjointState::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), lb0);
        let num = integrate_numeric(&q0, &lam, &ConstantControl(Control::new(v, w)), dt, 1e-4).unwrap();
        let n = num.len();
        for (k, s) in num.iter().enumerate() {
            if k % 100 != 0 && k + 1 != n {
                continue;
            }
            let (q, lb) = propagate_regular(&q0, lb0, v, w, s.t).unwrap();
            let err = q.to_array().iter().zip(s.q.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            stats.oracle_err = stats.oracle_err.max(err).max((lb - s.lambda.lbeta).abs());
            stats.k2_err = stats.k2_err.max(k2_of(&q, lb)).max(k2_of(&s.q, s.lambda.lbeta));
        }
        let seg = regular_segment(&q0, &lam, v, w, dt, 1e-2).unwrap();
        for s in &seg.samples {
            stats.k2_err = stats.k2_err.max(k2_of(&s.q, s.lambda.lbeta));
        }
    }
    stats
}

/// Suite 4: 100 random extremals, T <= 10.
fn simulate_suite() -> (Vec<Trajectory>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut worst: f64 = 0.0;
    let mut out = Vec::new();
    for _ in 0..100 {
        let q0 = random_config(&mut rng);
        let l0 = random_adjoint(&mut rng);
        let t = rng.gen_range(0.5..=10.0);
        let traj = simulate_extremal(&q0, &l0, t, &SimulateOptions::default()).unwrap();
        let h0 = traj.segments[0].first().h;
        worst = traj.samples().map(|s| (s.h - h0).abs()).fold(worst, f64::max);
        out.push(traj);
    }
    (out, worst)
}

/// Suite 5: 50 random phi_omega-singular arcs. Returns (E drift, closed-form error, arcs).
fn singular_suite() -> (f64, f64, Vec<Trajectory>) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let (mut e_err, mut lt_err) = (0.0f64, 0.0f64);
    let mut arcs = Vec::new();
    while arcs.len() < 50 {
        let q = random_config(&mut rng);
        let pv = bang(&mut rng) * rng.gen_range(0.5..2.0);
        let lt = pv * rng.gen_range(-0.9..0.9);
        let (start, c) = singular_seed(&q, lt, pv).unwrap();
        let arc = propagate_phi_omega_singular(&start, &c, 3.0, 1e-3, 1e-6).unwrap();
        if arc.segment.samples.len() < 2 {
            continue;
        }
        let e0 = singular_invariant(lt, q.beta, pv);
        for s in &arc.segment.samples {
            e_err = e_err.max((singular_invariant(s.lambda.ltheta, s.q.beta, pv) - e0).abs());
            let branch = (s.lambda.ltheta - pv * s.q.beta.sin()).signum();
            let closed = lambda_theta_singular(lt, q.beta, s.q.beta, pv, branch).unwrap();
            lt_err = lt_err.max((closed - s.lambda.ltheta).abs());
        }
        let seg = arc.segment;
        arcs.push(Trajectory { constants: seg.constants, segments: vec![seg], truncated: false });
    }
    (e_err, lt_err, arcs)
}

fn in_band(beta: f64) -> bool {
    let b = wrap_angle(beta);
    b.abs() <= FRAC_PI_6 + 1e-9 || b.abs() >= 5.0 * FRAC_PI_6 - 1e-9
}

/// Suite 6: merging curves and time-reversed band exits.
fn merging_suite() -> Result<(String, bool, Vec<Trajectory>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let (mut dd_max, mut da_max, mut w_max) = (0.0f64, 0.0f64, 0.0f64);
    let mut band_ok = true;
    let (mut exit_sin, mut exit_w) = (0.0f64, 0.0f64);
    let mut trajs = Vec::new();
    let (mut count, mut rejected) = (0, 0);
    for i in 0..80 {
        let l = loop {
            let (c1, c2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if f64::hypot(c1, c2) > 0.1 {
                break Line::new(c1, c2, rng.gen_range(-2.0..2.0))?;
            }
        };
        let v = bang(&mut rng);
        let branch = MergeBranch::new(bang(&mut rng))?;
        // a quarter of the runs use the band around beta = pi
        let mag = rng.gen_range(0.01..0.52);
        let beta = if i % 4 == 3 { PI - bang(&mut rng) * mag } else { bang(&mut rng) * mag };
        let start = if i % 4 == 3 { PI - bang(&mut rng) * 1e-3 } else { bang(&mut rng) * 1e-3 };
        // the sign branch is validated against the dynamics; record rejections
        let curve = match merging_curve(&l, v, branch, beta, 1e-6, 1e-3) {
            Err(Error::BranchInconsistent { .. }) if branch.sigma < 0.0 => {
                rejected += 1;
                continue;
            }
            r => r?,
        };
        let mut segs = vec![curve.segment];
        let exit = merging_band_exit(&l, v, branch, MergeStart::Beta(start), None, 1e-3)?;
        let grow_end = if exit.direction == MergeDirection::Departure { exit.segment.last() } else { exit.segment.first() };
        exit_sin = exit_sin.max((grow_end.q.beta.sin().abs() - 0.5).abs());
        exit_w = exit_w.max((grow_end.u.omega.abs() - 1.0).abs());
        segs.push(exit.segment);

        for seg in &segs {
            let info = seg.merge.expect("merge segments carry their frame");
            for s in &seg.samples {
                let (dd, da) = manifold_residuals(&info.frame, info.branch, &s.q);
                dd_max = dd_max.max(dd);
                da_max = da_max.max(da);
                w_max = w_max.max(s.u.omega.abs());
                band_ok &= in_band(s.q.beta);
            }
            count += 1;
        }
        for seg in segs {
            trajs.push(Trajectory { constants: seg.constants, segments: vec![seg], truncated: false });
        }
    }
    let pass = dd_max <= 1e-6 && da_max <= 1e-6 && w_max <= 1.0 + 1e-12 && band_ok && exit_sin <= 1e-6 && exit_w <= 1e-6;
    let detail = format!(
        "{count} curves ({rejected} sigma = -1 seeds rejected as branch-inconsistent): |d-2s sin b| {dd_max:.1e}, |a-2s b| {da_max:.1e}, max|w| {w_max:.15}, band {}; \
         exits: ||sin b|-1/2| {exit_sin:.1e}, ||w|-1| {exit_w:.1e}",
        if band_ok { "ok" } else { "violated" }
    );
    Ok((detail, pass, trajs))
}

fn script(name: &str) -> CompositionScript {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scripts").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Replaces one sample, recomputing its switching values and `H`.
fn mutate(traj: &Trajectory, seg: usize, k: usize, f: impl Fn(&mut Configuration, &mut AdjointState, &mut Control)) -> Trajectory {
    let mut t = traj.clone();
    let s = t.segments[seg].samples[k];
    let (mut q, mut l, mut u) = (s.q, s.lambda, s.u);
    f(&mut q, &mut l, &mut u);
    t.segments[seg].samples[k] = TrajectorySample::new(s.t, q, l, u);
    t
}

fn seg_index(traj: &Trajectory, pred: impl Fn(&Segment) -> bool) -> usize {
    traj.segments.iter().position(|s| pred(s) && s.samples.len() > 10).expect("suitable segment")
}

/// Suite 7: one targeted mutation per check.
fn mutation_suite() -> (usize, Vec<String>) {
    let tol = ToleranceSet::default();
    let regular = simulate_extremal(
        &Configuration::new(0.0, 0.0, 0.0, 0.3),
        &AdjointState::new(1.0, 0.2, 0.5, -0.4),
        4.0,
        &SimulateOptions::default(),
    )
    .unwrap();
    let sing_traj = script("singular-extremal.json").run().unwrap();
    let msm = script("merge-straight-merge.json").run().unwrap();
    for base in [&regular, &sing_traj, &msm] {
        assert!(check_pmp(base, &tol).pass, "mutation base must pass: {:?}", check_pmp(base, &tol).failed());
    }
    let r0 = seg_index(&regular, |s| s.kind.is_regular() && s.constants.c4 != 0.0);
    let mid = |t: &Trajectory, i: usize| t.segments[i].samples.len() / 2;
    let rm = mid(&regular, r0);
    // a sample where |phi_omega| is large
    let big_w = regular.segments[r0]
        .samples
        .iter()
        .enumerate()
        .skip(1)
        .take(regular.segments[r0].samples.len() - 2)
        .max_by(|a, b| a.1.sw.phi_omega.abs().total_cmp(&b.1.sw.phi_omega.abs()))
        .unwrap()
        .0;
    let sing = seg_index(&sing_traj, |s| s.kind.is_phi_omega_singular() && s.merge.is_none());
    let merge = seg_index(&msm, |s| s.merge.is_some());

    let mut zero = regular.clone();
    for seg in &mut zero.segments {
        for s in &mut seg.samples {
            *s = TrajectorySample::new(s.t, s.q, AdjointState::new(0.0, 0.0, 0.0, 0.0), s.u);
        }
    }
    let cases: Vec<(&str, Trajectory)> = vec![
        ("nontriviality", zero),
        ("lxly_constancy", mutate(&regular, r0, rm, |_, l, _| l.lx += 1e-6)),
        ("ltheta_affine", mutate(&regular, r0, rm, |_, l, _| l.ltheta += 1e-5)),
        ("lbeta_exponential", mutate(&regular, r0, rm, |_, l, _| l.lbeta *= 1.0 + 1e-3)),
        ("h_constancy", mutate(&regular, r0, rm, |q, _, _| q.theta += 1e-3)),
        ("control_maximization", mutate(&regular, r0, big_w, |_, _, u| u.omega = 0.0)),
        ("switching_consistency", mutate(&regular, r0, big_w, |_, _, u| u.omega = -u.omega)),
        ("k2_invariance", mutate(&regular, r0, rm, |q, _, _| q.beta += 1e-4)),
        ("e_invariance", mutate(&sing_traj, sing, mid(&sing_traj, sing), |q, _, _| q.beta += 1e-4)),
        ("merging_manifold", mutate(&msm, merge, mid(&msm, merge), |q, _, _| q.y += 1e-4)),
    ];
    let mut missed = Vec::new();
    for (name, t) in &cases {
        let rep = check_pmp(t, &tol);
        if rep.check(name).is_none_or(|c| c.pass) {
            missed.push(name.to_string());
        }
    }
    (cases.len(), missed)
}

/// Suite 9: merge-straight-merge against regular extremals over 50 trailer lengths.
fn straight_line_suite() -> (bool, String) {
    const DIST: f64 = 50.0;
    let beta = PI / 12.0;
    let q_a = Configuration::new(0.0, 0.0, 0.3, beta);
    let msm = |straight: f64, eps: f64| {
        let s = CompositionScript {
            seed: Some(Seed::MergeApproach { sigma: 1.0 }),
            eps_merge: eps,
            directives: vec![
                Directive::MergeIn { sigma: 1.0 },
                Directive::Straight { duration: straight },
                Directive::MergeOut { sigma: 1.0, side: 1.0, beta_end: Some(beta) },
            ],
            ..CompositionScript::new(q_a, vec![])
        };
        s.run().unwrap()
    };
    let disp = |t: &Trajectory| {
        let q = t.last_sample().unwrap().q;
        (q.x - q_a.x).hypot(q.y - q_a.y)
    };
    // pick the straight length so the end lies DIST away (displacement is affine in it)
    let mut best: Option<(f64, f64, Trajectory)> = None;
    for eps in [1e-6, 1e-4, 1e-3] {
        let (d1, d2) = (disp(&msm(10.0, eps)), disp(&msm(20.0, eps)));
        let len = 10.0 + (DIST - d1) * 10.0 / (d2 - d1);
        let t = msm(len, eps);
        let dur = t.duration();
        if best.as_ref().is_none_or(|b| dur < b.1) {
            best = Some((eps, dur, t));
        }
    }
    let (eps, t_msm, traj) = best.unwrap();
    let q_b = traj.last_sample().unwrap().q;
    let heading_gap = wrap_angle(q_b.theta - q_a.theta).abs();
    let msm_ok = check_pmp(&traj, &ToleranceSet::default()).pass;

    // candidate generator: regular extremals from random adjoints at q_a,
    // credited with the first time they get DIST away in any pose
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let (mut regular_count, mut best_regular, mut farthest) = (0, f64::INFINITY, 0.0f64);
    let horizon = t_msm.max(80.0);
    for _ in 0..200 {
        let l0 = random_adjoint(&mut rng);
        let traj = simulate_extremal(&q_a, &l0, horizon, &SimulateOptions { h: 1e-2, ..Default::default() }).unwrap();
        if !traj.segments.iter().all(|s| s.kind.is_regular()) {
            continue;
        }
        regular_count += 1;
        for s in traj.samples() {
            let d = (s.q.x - q_a.x).hypot(s.q.y - q_a.y);
            farthest = farthest.max(d);
            if d >= DIST {
                best_regular = best_regular.min(s.t);
                break;
            }
        }
    }
    let pass = msm_ok && t_msm < best_regular;
    let regular = if best_regular.is_finite() {
        format!("best all-regular {best_regular:.3}")
    } else {
        format!("no all-regular candidate reached {DIST} within {horizon:.0} (farthest {farthest:.3})")
    };
    let detail = format!(
        "merge-straight-merge {t_msm:.3} (eps_merge {eps:.0e}, heading gap {heading_gap:.1e}, checker {}) vs \
         {regular_count} regular candidates: {regular}",
        if msm_ok { "pass" } else { "FAIL" }
    );
    (pass, detail)
}

/// Suite 10: the CLI renders the committed scripts twice, identically.
fn plot_suite() -> (bool, String) {
    let mut pass = true;
    let mut notes = Vec::new();
    for name in ["singular-extremal.json", "straight-extremal.json", "merge-straight-merge.json"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scripts").join(name);
        let run = || Command::new(env!("CARGO_BIN_EXE_trailer")).arg("plot").arg(&path).output().unwrap();
        let (a, b) = (run(), run());
        let ok = a.status.success() && a.stdout == b.stdout && a.stdout.starts_with(b"<svg");
        pass &= ok;
        notes.push(format!("{name} {} bytes{}", a.stdout.len(), if ok { "" } else { " MISMATCH" }));
    }
    (pass, notes.join(", "))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let tol = ToleranceSet::default();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    let rs = regular_suite();
    results.push((
        1,
        "closed form vs RK4 oracle",
        outcome(
            rs.oracle_err <= 1e-6,
            format!("1000 primitives ({} near equilibrium): max error {:.2e} <= 1e-6", rs.near_eq, rs.oracle_err),
        ),
    ));
    results.push((2, "K2 conservation", outcome(rs.k2_err <= 1e-8, format!("max |K2 drift| {:.2e} <= 1e-8", rs.k2_err))));

    let (sims, h_drift) = simulate_suite();
    let (e_err, lt_err, arcs) = singular_suite();
    let merging = merging_suite();

    // suite 3 runs over every trajectory generated here
    let mut all: Vec<Trajectory> = sims.clone();
    all.extend(arcs);
    if let Ok((_, _, m)) = &merging {
        all.extend(m.iter().cloned());
    }
    for name in ["singular-extremal.json", "straight-extremal.json", "merge-straight-merge.json"] {
        all.push(script(name).run().unwrap());
    }
    let (mut lxly, mut lt_aff, mut lb_exp) = (0.0f64, 0.0f64, 0.0f64);
    for t in &all {
        let rep = check_pmp(t, &tol);
        let r = |n: &str| rep.check(n).map_or(f64::INFINITY, |c| c.max_residual);
        lxly = lxly.max(r("lxly_constancy"));
        lt_aff = lt_aff.max(r("ltheta_affine"));
        lb_exp = lb_exp.max(r("lbeta_exponential"));
    }
    results.push((
        3,
        "adjoint identities",
        outcome(
            lxly <= 1e-12 && lt_aff <= 1e-8 && lb_exp <= 1e-5,
            format!(
                "{} trajectories: lx,ly drift {lxly:.1e}, ltheta affine {lt_aff:.1e}, lbeta quadrature {lb_exp:.1e}",
                all.len()
            ),
        ),
    ));
    results.push((
        4,
        "Hamiltonian constancy",
        outcome(h_drift <= 1e-6, format!("100 runs, T <= 10: max |H - H0| {h_drift:.2e} <= 1e-6")),
    ));
    results.push((
        5,
        "singular conservation",
        outcome(
            e_err <= 1e-6 && lt_err <= 1e-6,
            format!("50 arcs: max E drift {e_err:.2e}, closed-form ltheta error {lt_err:.2e} (<= 1e-6)"),
        ),
    ));
    results.push((
        6,
        "merging-curve manifold",
        match merging {
            Ok((detail, pass, _)) => outcome(pass, detail),
            Err(e) => outcome(false, format!("generation failed: {e}")),
        },
    ));
    let (n, missed) = mutation_suite();
    results.push((
        7,
        "checker soundness",
        outcome(
            missed.is_empty(),
            format!("{}/{n} targeted mutations detected{}", n - missed.len(), if missed.is_empty() { String::new() } else { format!(", missed {missed:?}") }),
        ),
    ));
    let traj = simulate_extremal(
        &Configuration::default(),
        &AdjointState::new(1.0, 0.0, 0.5, 0.0),
        4.0,
        &SimulateOptions::default(),
    )
    .unwrap();
    let first = traj.switch_times().first().copied().unwrap_or(f64::NAN);
    let err = (first - FRAC_PI_2).abs();
    results.push((8, "composer event accuracy", outcome(err <= 1e-9, format!("first switch {first:.15}, |t - pi/2| {err:.1e} <= 1e-9"))));
    let (pass, detail) = straight_line_suite();
    results.push((9, "straight-line necessity demo", outcome(pass, detail)));
    let (pass, detail) = plot_suite();
    results.push((10, "plot reproduction", outcome(pass, detail)));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} passed in {:.1} s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
