use num_complex::Complex64;
use proptest::prelude::*;
use qsd_core::transform::master_l;
use qsd_core::{phi_right_inverse, Analysis, Kind, LevyModel};

fn model() -> impl Strategy<Value = LevyModel> {
    let erlang =
        (0.2..3.0f64, 1u32..5, 1.1..5.0f64).prop_map(|(l, k, m)| LevyModel::cp_erlang(l, k, m * l * k as f64).unwrap());
    let bm = (0.3..3.0f64, 0.1..3.0f64, any::<bool>()).prop_map(|(s, c, sn)| {
        let kind = if sn {
            Kind::SpectrallyNegative
        } else {
            Kind::SpectrallyPositive
        };
        LevyModel::brownian(kind, s, c).unwrap()
    });
    prop_oneof![erlang, bm]
}

fn analysis(m: &LevyModel) -> Analysis {
    Analysis::new(m.clone()).expect("stable built-in models are certified")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_inverts_psi(m in model(), ds in 1e-6..20.0f64) {
        let an = analysis(&m);
        let s = an.zeta_star() + ds;
        let eta = phi_right_inverse(&m, s).unwrap();
        prop_assert!(eta >= an.theta_star());
        prop_assert!(close(m.psi(eta, 0).unwrap(), s, 1e-10));
    }

    #[test]
    fn psi_then_phi_is_identity_right_of_minimiser(m in model(), d in 1e-3..5.0f64) {
        let an = analysis(&m);
        let (lo, hi) = m.domain();
        let eta = an.theta_star() + d;
        prop_assume!(eta > lo && eta < hi);
        let back = phi_right_inverse(&m, m.psi(eta, 0).unwrap()).unwrap();
        prop_assert!(close(back, eta, 1e-8), "{} vs {}", back, eta);
    }

    #[test]
    fn psi_derivatives_match_finite_differences(m in model(), x in -0.9..3.0f64) {
        let an = analysis(&m);
        let (lo, _) = m.domain();
        // stay well inside the domain
        let eta = if lo.is_finite() { lo + (x + 1.0) * 0.2 * (an.theta_star() - lo).abs().max(0.1) } else { x };
        prop_assume!(eta - 1e-3 > lo);
        let h = 1e-4 * if lo.is_finite() { (eta - lo).min(1.0) } else { 1.0 };
        for k in 0..3 {
            let fd = (m.psi(eta + h, k).unwrap() - m.psi(eta - h, k).unwrap()) / (2.0 * h);
            let d = m.psi(eta, k + 1).unwrap();
            prop_assert!(close(fd, d, 1e-5), "order {}: {} vs {}", k + 1, fd, d);
        }
    }

    #[test]
    fn critical_point_is_a_minimum(m in model()) {
        let an = analysis(&m);
        prop_assert!(an.zeta_star() < 0.0);
        prop_assert!(m.psi(an.theta_star(), 1).unwrap().abs() < 1e-10);
        prop_assert!(an.critical.psi_dd > 0.0);
    }

    #[test]
    fn mu_tilde_is_a_decreasing_transform(m in model(), a in 0.0..6.0f64, b in 0.0..6.0f64, da in 0.01..1.0f64, db in 0.01..1.0f64) {
        let an = analysis(&m);
        let mu = an.mu_tilde(a, b).unwrap();
        prop_assert!(mu > 0.0 && mu <= 1.0 + 1e-12, "{}", mu);
        prop_assert!(an.mu_tilde(a + da, b).unwrap() < mu);
        prop_assert!(an.mu_tilde(a, b + db).unwrap() < mu);
    }

    #[test]
    fn mu_tilde_routes_agree(m in model(), a in 0.0..6.0f64, b in 0.0..6.0f64) {
        let an = analysis(&m);
        let closed: f64 = an.mu_tilde_closed(a, b).unwrap();
        let ratio: f64 = an.mu_tilde_ratio(a, b).unwrap();
        prop_assert!(close(closed, ratio, 1e-9), "{} vs {}", closed, ratio);
        let cx: Complex64 = an.mu_tilde_closed(Complex64::from(a), Complex64::from(b)).unwrap();
        prop_assert!(close(cx.re, closed, 1e-12) && cx.im.abs() < 1e-12);
    }

    #[test]
    fn xi_tilde_real_and_complex_agree(m in model(), a in 0.0..6.0f64, b in 0.0..6.0f64) {
        let an = analysis(&m);
        let x = an.xi_tilde(a, b).unwrap();
        let cx: Complex64 = an.xi_tilde_generic(Complex64::from(a), Complex64::from(b)).unwrap();
        prop_assert!(x.is_finite());
        prop_assert!(close(cx.re, x, 1e-9) && cx.im.abs() < 1e-9 * x.abs().max(1.0));
    }

    #[test]
    fn normalisation_at_origin(m in model()) {
        let an = analysis(&m);
        prop_assert!((an.mu_tilde(0.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
        // ξ̃(0,0) is C₃(0,0)(1 − μ̃(0,0))/C₁(0,0): zero up to rounding of μ̃
        let scale = (an.c3_origin() / an.c1_origin()).abs().max(1.0);
        prop_assert!(an.xi_tilde(0.0, 0.0).unwrap().abs() < 1e-12 * scale);
    }

    #[test]
    fn master_transform_is_conjugate_symmetric(m in model(), re in 0.0..3.0f64, im in 0.01..20.0f64, a in 0.0..3.0f64, b in 0.0..3.0f64) {
        let an = analysis(&m);
        let th = Complex64::new(an.zeta_star() + re, im);
        let up = master_l(&an, th, a, b).unwrap();
        let down = master_l(&an, th.conj(), a, b).unwrap();
        prop_assert!((up - down.conj()).norm() <= 1e-12 * up.norm().max(1.0));
    }

    #[test]
    fn theta_l_is_a_probability_on_the_real_axis(m in model(), th in 1e-3..100.0f64) {
        let an = analysis(&m);
        let v = th * master_l(&an, Complex64::from(th), 0.0, 0.0).unwrap().re;
        prop_assert!(v > 0.0 && v < 1.0, "{}", v);
    }
}
