use std::f64::consts::PI;

use proptest::prelude::*;
use trailer_pmp::checker::{check_pmp, ToleranceSet};
use trailer_pmp::composer::{simulate_extremal, SimulateOptions};
use trailer_pmp::dynamics::{hamiltonian, integrate_numeric, switching, ConstantControl};
use trailer_pmp::io::{from_json, to_json};
use trailer_pmp::regular::{propagate_regular, regular_constants, K1};
use trailer_pmp::singular::{
    lambda_theta_singular, manifold_residuals, merging_curve, merging_feasible, propagate_phi_omega_singular,
    singular_invariant, singular_seed,
};
use trailer_pmp::*;

fn bang() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(-1.0)]
}

fn config() -> impl Strategy<Value = Configuration> {
    (-5.0..5.0f64, -5.0..5.0f64, -PI..PI, -PI..PI).prop_map(|(x, y, t, b)| Configuration::new(x, y, t, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wrap_angle_range_and_congruence(a in -1e3..1e3f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        let k = ((a - w) / (2.0 * PI)).round();
        prop_assert!((a - w - 2.0 * PI * k).abs() < 1e-9);
    }

    #[test]
    fn signed_distance_scale_invariance(c1 in -3.0..3.0f64, c2 in -3.0..3.0f64, c3 in -3.0..3.0f64,
                                        k in 0.1..10.0f64, x in -5.0..5.0f64, y in -5.0..5.0f64) {
        prop_assume!(c1.hypot(c2) > 1e-3);
        let l = Line::new(c1, c2, c3).unwrap();
        let d = signed_distance(&l, x, y).unwrap();
        let ls = Line::new(k * c1, k * c2, k * c3).unwrap();
        prop_assert!((signed_distance(&ls, x, y).unwrap() - d).abs() < 1e-12 * (1.0 + d.abs()));
        prop_assert!((signed_distance(&l.reversed(), x, y).unwrap() + d).abs() < 1e-12 * (1.0 + d.abs()));
    }

    #[test]
    fn hamiltonian_is_bilinear_and_maximized_on_corners(q in config(), l in prop::array::uniform4(-2.0..2.0f64),
                                                      v in -1.0..1.0f64, w in -1.0..1.0f64) {
        let lam = AdjointState::from_array(l);
        let sw = switching(&q, &lam);
        let h = hamiltonian(&q, &lam, &Control::new(v, w));
        prop_assert!((h - (v * sw.phi_v + w * sw.phi_omega)).abs() < 1e-12);
        let best = Control::CANDIDATES.iter().map(|u| hamiltonian(&q, &lam, u)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(h <= best + 1e-12);
        prop_assert!((best - (sw.phi_v.abs() + sw.phi_omega.abs())).abs() < 1e-12);
    }

    #[test]
    fn regular_semigroup(q in config(), lb in -5.0..5.0f64, v in bang(), w in bang(),
                         t1 in 0.0..2.0f64, t2 in 0.0..2.0f64) {
        let (qa, la) = propagate_regular(&q, lb, v, w, t1).unwrap();
        let (qb, lbb) = propagate_regular(&qa, la, v, w, t2).unwrap();
        let (qc, lc) = propagate_regular(&q, lb, v, w, t1 + t2).unwrap();
        prop_assert!(qb.distance(&qc) < 1e-9, "{qb:?} vs {qc:?}");
        prop_assert!((lbb - lc).abs() < 1e-9 * (1.0 + lc.abs()));
    }

    #[test]
    fn regular_matches_integrator_and_conserves_k2(q in config(), lb in -5.0..5.0f64, v in bang(), w in bang(),
                                                   dt in 0.0..4.0f64) {
        let (qc, lc) = propagate_regular(&q, lb, v, w, dt).unwrap();
        let lam = AdjointState::new(0.3, -0.2, 0.1, lb);
        let num = integrate_numeric(&q, &lam, &ConstantControl(Control::new(v, w)), dt, 1e-3).unwrap();
        let end = num.last().unwrap();
        prop_assert!(qc.distance(&end.q) < 1e-9);
        prop_assert!((lc - end.lambda.lbeta).abs() < 1e-9 * (1.0 + lc.abs()));
        let p = regular_constants(q.beta, lb, v, w).unwrap();
        let k2 = lc * (w - v * qc.beta.sin());
        prop_assert!((k2 - p.k2).abs() < 1e-8 * (1.0 + p.k2.abs()));
        if let K1::Equilibrium = p.k1 { prop_assert!((qc.beta - q.beta).abs() < 1e-12) }
    }

    #[test]
    fn singular_arcs_conserve_e_and_follow_the_closed_form(q in config(), lt in -0.8..0.8f64, pv in 0.5..2.0f64,
                                                           sign in bang()) {
        let pv = sign * pv;
        prop_assume!((lt / pv).abs() <= 0.9);
        let (start, c) = singular_seed(&q, lt, pv).unwrap();
        let arc = propagate_phi_omega_singular(&start, &c, 3.0, 1e-3, 1e-6).unwrap();
        let e0 = singular_invariant(lt, q.beta, pv);
        let (b0, l0) = (q.beta, lt);
        for s in &arc.segment.samples {
            prop_assert!((singular_invariant(s.lambda.ltheta, s.q.beta, pv) - e0).abs() < 1e-6);
            let branch = (s.lambda.ltheta - pv * s.q.beta.sin()).signum();
            let closed = lambda_theta_singular(l0, b0, s.q.beta, pv, branch).unwrap();
            prop_assert!((closed - s.lambda.ltheta).abs() < 1e-6);
            prop_assert!(s.u.omega.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn merging_curves_stay_on_the_manifold(beta in 0.02..0.52f64, side in bang(), v in bang(),
                                           c1 in -1.0..1.0f64, c2 in -1.0..1.0f64, c3 in -2.0..2.0f64) {
        prop_assume!(c1.hypot(c2) > 0.1);
        let l = Line::new(c1, c2, c3).unwrap();
        let curve = merging_curve(&l, v, MergeBranch::PLUS, side * beta, 1e-6, 1e-3).unwrap();
        let info = curve.segment.merge.unwrap();
        for s in &curve.segment.samples {
            let (dd, da) = manifold_residuals(&info.frame, info.branch, &s.q);
            prop_assert!(dd < 1e-6 && da < 1e-6);
            prop_assert!(s.u.omega.abs() <= 1.0 + 1e-12);
            prop_assert!(merging_feasible(s.q.beta));
            prop_assert!(singular_invariant(s.lambda.ltheta, s.q.beta, s.sw.phi_v).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn simulated_extremals_pass_the_checker_and_round_trip(q in config(), l in prop::array::uniform4(-1.0..1.0f64),
                                                         t in 0.5..10.0f64) {
        let lam = AdjointState::from_array(l);
        prop_assume!(lam.norm_inf() > 1e-3);
        let traj = simulate_extremal(&q, &lam, t, &SimulateOptions::default()).unwrap();
        let rep = check_pmp(&traj, &ToleranceSet::default());
        prop_assert!(rep.pass, "{:?}", rep.failed());
        let h0 = traj.segments[0].first().h;
        prop_assert!(traj.samples().all(|s| (s.h - h0).abs() <= 1e-6));
        let text = to_json(&traj).unwrap();
        prop_assert_eq!(to_json(&from_json(&text).unwrap()).unwrap(), text);
    }
}
