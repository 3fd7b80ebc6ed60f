//! Independent oracles for the analytic pipeline: the spectrally positive
//! coefficients written out directly in derivatives of the exponent, a
//! numerical series fit of the master transform, and Brownian first-passage
//! closed forms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qsd_core::transform::{invert_time, master_l, InversionConfig};
use qsd_core::{phi_right_inverse, Analysis, Kind, LevyModel, SeriesConstants};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn me2() -> LevyModel {
    LevyModel::cp_erlang(1.0, 2, 3.0).unwrap()
}

fn bm(kind: Kind) -> LevyModel {
    LevyModel::brownian(kind, 1.0, 1.0).unwrap()
}

/// The spectrally positive `C₀…C₃` expanded term by term in `ψ̂` and its
/// derivatives at `α+ϑ*` (valid where `ψ̂(α+ϑ*) ≠ 0` and `α+β > 0`).
fn expanded_sp(an: &Analysis, b: &SeriesConstants, alpha: f64, beta: f64) -> [f64; 4] {
    let m = &an.model;
    let ts = an.theta_star();
    let zs = an.zeta_star();
    let u = alpha + ts;
    let p = m.psi(u, 0).unwrap();
    let p1 = m.psi(u, 1).unwrap();
    let p2 = m.psi(u, 2).unwrap();
    let p3 = m.psi(u, 3).unwrap();
    let s0 = m.psi(0.0, 1).unwrap();
    let d = zs - m.psi(beta, 0).unwrap();
    let ab = (alpha + beta) / m.psi(alpha + beta, 0).unwrap();
    let (b1, b2, b3) = (b.c1, b.c2, b.c3);
    let g0 = ab - u / p;
    let c0 = g0 * s0 / d;
    let c1 = -s0 * b1 * (p - u * p1) / (p * p * d);
    let c2 = s0 / d
        * (u * (b1 * b1 * (p * p2 - 2.0 * p1 * p1) + 2.0 * b2 * p * p1) / (2.0 * p.powi(3)) + b1 * b1 * p1 / (p * p)
            - b2 / p
            - g0 / d);
    let inner = 6.0 * b3 * p.powi(3) - 6.0 * b1.powi(3) * u * p1.powi(3)
        + 6.0 * b1 * p * p1 * (b1 * b1 * u * p2 + p1 * (b1 * b1 + 2.0 * b2 * u))
        - 6.0 * p * p * p1 * (2.0 * b1 * b2 + b3 * u)
        - p * p * b1 * (3.0 * p2 * (b1 * b1 + 2.0 * b2 * u) + b1 * b1 * u * p3);
    let c3 = s0 * (b1 * (p - p1 * u) / (p * p * d * d) - inner / (6.0 * p.powi(4) * d));
    [c0, c1, c2, c3]
}

#[test]
fn sp_coefficients_match_the_expanded_formulas() {
    for model in [
        me2(),
        bm(Kind::SpectrallyPositive),
        LevyModel::cp_erlang(1.0, 3, 5.0).unwrap(),
    ] {
        let an = Analysis::new(model).unwrap();
        for &(a, b) in &[(0.1, 0.0), (0.3, 0.7), (2.0, 0.5), (4.0, 3.0), (0.05, 5.0)] {
            let want = expanded_sp(&an, &an.constants, a, b);
            let got = an.coefficients_with(&an.constants, a, b).unwrap();
            for k in 0..4 {
                let scale = want[k].abs().max(1e-12);
                assert!(
                    (got[k] - want[k]).abs() <= 1e-10 * scale,
                    "C{k}({a},{b}): {} vs {}",
                    got[k],
                    want[k]
                );
            }
        }
    }
}

/// Interpolates `r ↦ L(ζ* + r²)` by a polynomial in `r` on `[0, R]` and
/// reads off the first four Taylor coefficients.
fn series_fit(an: &Analysis, alpha: f64, beta: f64, radius: f64) -> [f64; 4] {
    let deg = 10;
    let nodes: Vec<f64> = (0..=deg)
        .map(|j| 0.5 * (1.0 - (std::f64::consts::PI * (j as f64 + 0.5) / (deg + 1) as f64).cos()))
        .collect();
    let mut v = DMatrix::<f64>::zeros(deg + 1, deg + 1);
    let mut rhs = DVector::<f64>::zeros(deg + 1);
    for (i, &x) in nodes.iter().enumerate() {
        let r = radius * x;
        for j in 0..=deg {
            v[(i, j)] = x.powi(j as i32);
        }
        rhs[i] = master_l(an, Complex64::from(an.zeta_star() + r * r), alpha, beta)
            .unwrap()
            .re;
    }
    let c = v.lu().solve(&rhs).unwrap();
    [c[0], c[1] / radius, c[2] / radius.powi(2), c[3] / radius.powi(3)]
}

#[test]
fn coefficients_match_a_numerical_series_fit() {
    let cases = [
        (Analysis::new(me2()).unwrap(), 0.05),
        (Analysis::new(bm(Kind::SpectrallyPositive)).unwrap(), 0.2),
        (Analysis::new(bm(Kind::SpectrallyNegative)).unwrap(), 0.2),
    ];
    for (an, radius) in &cases {
        for &(a, b) in &[(0.0, 0.0), (1.0, 1.0), (2.0, 0.5), (0.4, 3.0)] {
            let fit = series_fit(an, a, b, *radius);
            let c = an.joint_coeffs(a, b).unwrap().as_array();
            let scale = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for k in 0..4 {
                let tol = [1e-9, 1e-7, 1e-5, 1e-3][k];
                assert!(
                    (fit[k] - c[k]).abs() <= tol * scale,
                    "{:?} C{k}({a},{b}): fit {} vs {}",
                    an.model.kind,
                    fit[k],
                    c[k]
                );
            }
        }
    }
}

#[test]
fn phi_expansion_residual_shrinks() {
    for model in [me2(), LevyModel::cp_erlang(2.0, 2, 9.0).unwrap()] {
        let an = Analysis::new(model.clone()).unwrap();
        let ratios: Vec<f64> = (2..=6)
            .map(|j| {
                let h = 10f64.powi(-j);
                let s = an.zeta_star() + h;
                (phi_right_inverse(&model, s).unwrap() - an.constants.phi_expansion(s).unwrap()).abs() / h.powf(1.5)
            })
            .collect();
        for j in 0..3 {
            assert!(ratios[j + 1] < ratios[j], "{ratios:?}");
        }
    }
}

#[test]
fn erlang_phi_expansion_at_small_offset() {
    let an = Analysis::new(me2()).unwrap();
    let s = an.zeta_star() + 1e-4;
    let d = phi_right_inverse(&me2(), s).unwrap() - an.constants.phi_expansion(s).unwrap();
    assert!(d.abs() < 1e-7, "{d}");
}

#[test]
fn spectrally_negative_and_positive_brownian_agree() {
    let sn = Analysis::new(bm(Kind::SpectrallyNegative)).unwrap();
    let sp = Analysis::new(bm(Kind::SpectrallyPositive)).unwrap();
    for &(a, b) in &[(0.0, 0.0), (0.5, 2.0), (3.0, 1.0)] {
        assert!((sn.mu_tilde(a, b).unwrap() - sp.mu_tilde(a, b).unwrap()).abs() < 1e-14);
        assert!((sn.xi_tilde(a, b).unwrap() - sp.xi_tilde(a, b).unwrap()).abs() < 1e-13);
        let (x, y) = (sn.joint_coeffs(a, b).unwrap(), sp.joint_coeffs(a, b).unwrap());
        for (u, v) in x.as_array().iter().zip(y.as_array()) {
            assert!((u - v).abs() < 1e-12 * v.abs().max(1.0));
        }
    }
}

#[test]
fn marginal_density_integrates_to_one() {
    let an = Analysis::new(bm(Kind::SpectrallyNegative)).unwrap();
    let rule = qsd_core::quadrature::gauss_legendre(40);
    let mut total = 0.0;
    for k in 0..60 {
        let (lo, hi) = (k as f64, k as f64 + 1.0);
        for &(x, w) in &rule {
            let y = 0.5 * (hi - lo) * x + 0.5 * (hi + lo);
            total += 0.5 * (hi - lo) * w * an.mu_marginal_density_sn(y).unwrap();
        }
    }
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}

/// `∫ f` over `[0, hi]` with 1-wide Gauss–Legendre panels.
fn integrate(f: impl Fn(f64) -> f64, hi: f64) -> f64 {
    let rule = qsd_core::quadrature::gauss_legendre(30);
    let panels = hi.ceil() as usize;
    let mut s = 0.0;
    for k in 0..panels {
        let (lo, up) = (k as f64, (k as f64 + 1.0).min(hi));
        for &(x, w) in &rule {
            s += 0.5 * (up - lo) * w * f(0.5 * (up - lo) * x + 0.5 * (up + lo));
        }
    }
    s
}

/// `P_π(T>t)` for `B(t) − t` with `π = Exp(2)`, from the first-passage law.
fn brownian_survival(t: f64) -> f64 {
    let n = Normal::standard();
    let st = t.sqrt();
    integrate(
        |x| {
            let p = n.cdf((x - t) / st) - (2.0 * x).exp() * n.cdf((-x - t) / st);
            2.0 * (-2.0 * x).exp() * p
        },
        40.0 + 2.0 * t,
    )
}

/// `E_π[e^{−αQ(0)−βQ(t)}, T>t]` from the killed transition density.
fn brownian_joint(alpha: f64, beta: f64, t: f64) -> f64 {
    let st = t.sqrt();
    let phi = |z: f64| (-0.5 * z * z / t).exp() / (st * (2.0 * std::f64::consts::PI).sqrt());
    let hi = 30.0 + 2.0 * t;
    integrate(
        |x| {
            let inner = integrate(
                |y| {
                    // drift −1: e^{−(y−x) − t/2} [φ(y−x) − φ(y+x)]
                    (-(y - x) - 0.5 * t).exp() * (phi(y - x) - phi(y + x)) * (-beta * y).exp()
                },
                hi,
            );
            2.0 * (-2.0 * x).exp() * (-alpha * x).exp() * inner
        },
        30.0,
    )
}

#[test]
fn brownian_survival_matches_first_passage_law() {
    let an = Analysis::new(bm(Kind::SpectrallyPositive)).unwrap();
    let times = [0.5, 2.0, 5.0, 10.0, 30.0];
    let g = invert_time(&an, 0.0, 0.0, &times, &InversionConfig::default()).unwrap();
    for (t, s) in times.iter().zip(&g.survival) {
        let exact = brownian_survival(*t);
        assert!((s - exact).abs() < 1e-7 * exact, "t = {t}: {s} vs {exact}");
    }
}

#[test]
fn brownian_joint_transform_matches_killed_density() {
    let an = Analysis::new(bm(Kind::SpectrallyPositive)).unwrap();
    let g = invert_time(&an, 1.0, 0.5, &[1.0, 5.0], &InversionConfig::default()).unwrap();
    for (i, t) in [1.0, 5.0].into_iter().enumerate() {
        let exact = brownian_joint(1.0, 0.5, t);
        assert!(
            (g.raw[i] - exact).abs() < 1e-6 * exact,
            "t = {t}: {} vs {exact}",
            g.raw[i]
        );
    }
}

#[test]
fn standard_normal_density_sanity() {
    // guards the oracle's own ingredients
    let n = Normal::standard();
    assert!((n.pdf(0.0) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
}
