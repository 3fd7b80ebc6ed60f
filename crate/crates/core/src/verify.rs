//! End-to-end oracle suite: the acceptance criteria, each returning a
//! pass/fail record. Shared by `qsd verify` and the acceptance tests.
//!
//! Oracles here are deliberately independent of the production path: the
//! M/E(2,ν)/1 expressions are closed forms written out by hand for that
//! model, and the Brownian ones are elementary.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::expansion::{Analysis, SeriesConstants};
use crate::exponent::{critical_point, phi_with, Kind, LevyModel};
use crate::qsim::{estimate_survival, SimConfig, Tilt};
use crate::transform::{
    invert_2d_density, invert_time, master_l, rate_profile, tauberian_tail, DensityKind, InversionConfig,
};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2}: {} ({:.1} ms) — {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed_ms,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub mc_replications: u64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            mc_replications: 1_000_000,
            seed: 20240611,
        }
    }
}

fn finish(id: u32, name: &str, start: Instant, outcome: Result<(bool, String)>) -> CriterionResult {
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name: name.into(),
        passed,
        detail,
        elapsed_ms,
    }
}

pub fn brownian_sp() -> LevyModel {
    LevyModel::brownian(Kind::SpectrallyPositive, 1.0, 1.0).expect("valid")
}

pub fn erlang_example() -> LevyModel {
    LevyModel::cp_erlang(1.0, 2, 3.0).expect("valid")
}

/// Every built-in model used by the property suite.
pub fn builtin_models() -> Vec<(String, LevyModel)> {
    let mut v = vec![
        ("brownian sp (1,1)".to_string(), brownian_sp()),
        (
            "brownian sn (1,1)".to_string(),
            LevyModel::brownian(Kind::SpectrallyNegative, 1.0, 1.0).expect("valid"),
        ),
    ];
    for (l, k, n) in [(1.0, 2, 3.0), (0.5, 2, 2.0), (1.0, 3, 5.0), (2.0, 2, 9.0)] {
        v.push((
            format!("cp_erlang ({l},{k},{n})"),
            LevyModel::cp_erlang(l, k, n).expect("valid"),
        ));
    }
    v
}

/// `[0, 5]` in ten equal steps.
fn unit_grid() -> Vec<f64> {
    (0..10).map(|i| 5.0 * i as f64 / 9.0).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn criterion_1() -> CriterionResult {
    let start = Instant::now();
    let out = critical_point(&brownian_sp()).map(|c| {
        let ok = (c.theta_star + 1.0).abs() <= 1e-12 && (c.zeta_star + 0.5).abs() <= 1e-12;
        (ok, c)
    });
    let elapsed = start.elapsed().as_secs_f64();
    finish(
        1,
        "Brownian critical point",
        start,
        out.map(|(ok, c)| {
            (
                ok && elapsed < 1e-3,
                format!(
                    "theta* = {:.17}, zeta* = {:.17}, runtime {:.3} ms",
                    c.theta_star,
                    c.zeta_star,
                    elapsed * 1e3
                ),
            )
        }),
    )
}

pub fn criterion_2() -> CriterionResult {
    let start = Instant::now();
    let out = (|| {
        let an = Analysis::new(brownian_sp())?;
        let mut worst = 0.0_f64;
        for &a in &unit_grid() {
            for &b in &unit_grid() {
                let c1 = an.joint_coeffs(a, b)?.c1;
                let exact = -4.0 * std::f64::consts::SQRT_2 / ((a + 1.0).powi(2) * (b + 1.0).powi(2));
                worst = worst.max(rel(c1, exact));
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        Ok((
            worst <= 1e-10 && elapsed < 1e-2,
            format!(
                "max relative error {worst:.2e} on 10x10 grid, runtime {:.3} ms",
                elapsed * 1e3
            ),
        ))
    })();
    finish(2, "Brownian C1 closed form", start, out)
}

/// Brownian `ξ̃` from its closed form, and the size of its terms.
pub fn brownian_xi(a: f64, b: f64) -> (f64, f64) {
    let (p2, q2) = ((1.0 + a).powi(2), (1.0 + b).powi(2));
    let v = 2.0 / (p2 * p2 * q2) + 2.0 / (p2 * q2 * q2) - 4.0 / (p2 * q2);
    (v, 4.0 / (p2 * q2))
}

pub fn criterion_3() -> CriterionResult {
    let start = Instant::now();
    let out = (|| {
        let an = Analysis::new(brownian_sp())?;
        let (mut wm, mut wx) = (0.0_f64, 0.0_f64);
        for &a in &unit_grid() {
            for &b in &unit_grid() {
                let mu = 1.0 / ((1.0 + a).powi(2) * (1.0 + b).powi(2));
                wm = wm.max(rel(an.mu_tilde(a, b)?, mu));
                let (xi, scale) = brownian_xi(a, b);
                // ξ̃ vanishes at the origin, so errors are measured against its term size
                wx = wx.max((an.xi_tilde(a, b)? - xi).abs() / xi.abs().max(scale));
            }
        }
        Ok((
            wm <= 1e-10 && wx <= 1e-10,
            format!("max relative error mu {wm:.2e}, xi {wx:.2e}"),
        ))
    })();
    finish(3, "Brownian mu and xi closed forms", start, out)
}

/// Transcriptions of the M/E(2,ν)/1 worked-example displays.
pub mod erlang_displays {
    fn cbrt(x: f64) -> f64 {
        x.cbrt()
    }

    /// `C₁(α,β)` for general `λ, ν`.
    pub fn c1(a: f64, b: f64, l: f64, n: f64) -> f64 {
        let n23 = n.powf(2.0 / 3.0);
        let k = cbrt(2.0) * cbrt(l) * n23;
        let num = 2f64.powf(5.0 / 3.0)
            * l
            * (b + n).powi(2)
            * (2.0 * l - n)
            * (cbrt(l) * n23).sqrt()
            * (a + k)
            * (a + k + 2.0 * n);
        let d1 = a * a + 2.0 * cbrt(2.0) * a * cbrt(l) * n23 - l * (a + n)
            + 2f64.powf(2.0 / 3.0) * l.powf(2.0 / 3.0) * n.powf(4.0 / 3.0)
            - cbrt(2.0) * l.powf(4.0 / 3.0) * n23;
        let den = 3f64.sqrt() * n * d1 * d1;
        let d2 = 2.0 * b.powi(3) - 3.0 * cbrt(2.0) * b * b * cbrt(l) * n23 + 6.0 * b * b * n
            - 6.0 * cbrt(2.0) * b * cbrt(l) * n.powf(5.0 / 3.0)
            + 2.0 * n * n * (3.0 * b + l)
            - 3.0 * cbrt(2.0) * cbrt(l) * n.powf(8.0 / 3.0)
            + 2.0 * n.powi(3);
        num / den / d2
    }

    /// `μ̃(α,β)` at `λ = 1, ν = 3`.
    pub fn mu(a: f64, b: f64) -> f64 {
        let c = cbrt(2.0) * 3f64.powf(2.0 / 3.0);
        let num = (8.0 - cbrt(2.0) * 3f64.powf(5.0 / 3.0)).powi(2) * (a + c) * (a + c + 6.0) * (b + 3.0).powi(2);
        let d1 = -a * a - 2f64.powf(4.0 / 3.0) * 3f64.powf(2.0 / 3.0) * a + a
            - 2f64.powf(2.0 / 3.0) * 3f64.powf(4.0 / 3.0)
            + c
            + 3.0;
        let d2 = -2.0 * b.powi(3)
            + 3.0 * (c - 6.0) * b * b
            + 18.0 * (c - 3.0) * b
            + 9.0 * (cbrt(2.0) * 3f64.powf(5.0 / 3.0) - 8.0);
        -num / (2.0 * d1 * d1 * d2)
    }

    /// The displayed `C₃(α,β)` for general `λ, ν`.
    pub fn c3(a: f64, b: f64, l: f64, n: f64) -> f64 {
        let s3 = 3f64.sqrt();
        let m = cbrt(2.0) * n.powf(2.0 / 3.0) * cbrt(l);
        let w = cbrt(l) * n.powf(2.0 / 3.0);
        let sw = w.sqrt();
        let w32 = w.powf(1.5);
        let p = m + n * n * l / (m + a).powi(2) - l + a - n;
        let q = 3.0 * n.powf(2.0 / 3.0) * cbrt(l) / 2f64.powf(2.0 / 3.0) - n * n * l / (b + n).powi(2) - b - n;
        let r = 1.0 - 2.0 * l * n * n / (m + a).powi(3);
        let e = a + m - n;
        let f = a * a + 3.0 * a * m + 3.0 * m * m;
        let h = a * a + 2.0 * m * a - a * l + m * m - l * m - l * n;
        let c43 = cbrt(4.0);
        let t1 = (2f64.powf(2.0 / 3.0) * sw * p / s3 - 2f64.powf(2.0 / 3.0) * a * sw * e * f / (s3 * (a + m).powi(3)))
            / (p * p * q * q);
        let s = 8.0 * p * r * r * w32 / s3
            - 8.0 * s3 * l * n * n * p * p * w32 / (m + a).powi(4)
            - 8.0 * a.powi(3) * w32 * e * f.powi(3) / (s3 * (a + m).powi(9))
            + 16.0 * s3 * a * l * n * n * p * r * w32 / (m + a).powi(4)
            + 16.0 * s3 * l * (m - n) * n * n * p * r * w32 / (m + a).powi(4)
            + 32.0 * l * n * n * w32 * e.powi(3) * h * h / (s3 * (a + m).powi(9))
            + 16.0 * c43 * a * l * n * n * p * p * sw / (s3 * (m + a).powi(4))
            + 16.0 * c43 * l * (m - n) * n * n * p * p * sw / (s3 * (m + a).powi(4))
            - f * h * 16.0 * c43 * a * l * sw * e.powi(3) * (a + m + 2.0 * n) / (3.0 * s3 * (a + m).powi(8))
            + 86.0 * cbrt(2.0) * l * e.powi(4) * (a + m + 2.0 * n) * h * h / (9.0 * s3 * sw * (a + m).powi(7));
        let t2 = s / (6.0 * p.powi(4) * q);
        (1.0 - 2.0 * l / n) * (t1 - t2)
    }

    /// The displayed `ξ̃ = I₁/I₂` at `λ = 1, ν = 3`.
    pub fn xi(a: f64, b: f64) -> f64 {
        let c = cbrt(2.0) * 3f64.powf(2.0 / 3.0);
        let i1 = 2f64.powf(5.0 / 3.0) * (a + c) * (a + c + 6.0) * (b + 3.0).powi(2);
        let d1 = -a * a - 2f64.powf(4.0 / 3.0) * 3f64.powf(2.0 / 3.0) * a + a
            - 3f64.powf(4.0 / 3.0) * 2f64.powf(2.0 / 3.0)
            + c
            + 3.0;
        let d2 = -2.0 * b.powi(3)
            + 3.0 * (c - 6.0) * b * b
            + 18.0 * (c - 3.0) * b
            + 9.0 * (3.0 * cbrt(2.0) * 3f64.powf(2.0 / 3.0) - 8.0);
        let i2 = 3f64.powf(7.0 / 6.0) * d1 * d1 * d2;
        i1 / i2
    }
}

/// Expansion constants with the signs used in the worked example's display.
pub fn display_constants(c: &SeriesConstants) -> SeriesConstants {
    let p2 = c.critical.psi_dd;
    let p3 = c.critical.psi_d3;
    let p4 = c.critical.psi_d4;
    let s2 = std::f64::consts::SQRT_2;
    SeriesConstants {
        c2: p3 / (3.0 * p2 * p2),
        c3: -7.0 / (18.0 * s2) * p3 * p3 / p2.powf(3.5) - p4 / (6.0 * s2 * p2.powf(2.5)),
        ..*c
    }
}

pub fn criterion_4() -> CriterionResult {
    let start = Instant::now();
    let out = (|| {
        let an = Analysis::new(erlang_example())?;
        let shown = display_constants(&an.constants);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut wm, mut wc1, mut wx, mut wc3, mut wxc) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        for _ in 0..20 {
            let a = 4.0 * rng.random::<f64>();
            let b = 4.0 * rng.random::<f64>();
            wm = wm.max(rel(an.mu_tilde(a, b)?, erlang_displays::mu(a, b)));
            wc1 = wc1.max(rel(an.joint_coeffs(a, b)?.c1, erlang_displays::c1(a, b, 1.0, 3.0)));
            wx = wx.max(rel(an.xi_tilde(a, b)?, erlang_displays::xi(a, b)));
            wxc = wxc.max(rel(erlang_displays::xi(a, b), erlang_displays::c1(a, b, 1.0, 3.0)));
            let c3 = an.coefficients_with(&shown, a, b)?[3];
            wc3 = wc3.max(rel(c3, erlang_displays::c3(a, b, 1.0, 3.0)));
        }
        let xi_display_origin = erlang_displays::xi(0.0, 0.0);
        Ok((
            wm <= 1e-8 && wx <= 1e-8,
            format!(
                "mu vs display {wm:.2e}, C1 vs display {wc1:.2e}; xi vs I1/I2 display {wx:.2e} \
                 (the I1/I2 display coincides with the C1 display to {wxc:.2e} and gives \
                 xi(0,0) = {xi_display_origin:.4} instead of 0); \
                 the C3 display is reproduced to {wc3:.2e} only with the displayed, sign-flipped B2/B3"
            ),
        ))
    })();
    finish(4, "M/E(2,3)/1 mu and xi vs worked example", start, out)
}

/// `|L(ζ*+h) − Σ C_k h^{k/2}| / h^{3/2}` for `h = 10⁻², …, 10⁻⁵`.
pub fn expansion_residuals(an: &Analysis, a: f64, b: f64) -> Result<Vec<f64>> {
    let c = an.joint_coeffs(a, b)?;
    [1e-2, 1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&h| {
            let l = master_l(an, Complex64::from(an.zeta_star() + h), a, b)?.re;
            Ok((l - c.eval(h)).abs() / h.powf(1.5))
        })
        .collect()
}

pub fn criterion_5() -> CriterionResult {
    let start = Instant::now();
    let out = (|| {
        let mut ok = true;
        let mut detail = Vec::new();
        for (name, model) in [("brownian", brownian_sp()), ("me2", erlang_example())] {
            let an = Analysis::new(model)?;
            for (a, b) in [(0.0, 0.0), (1.0, 1.0), (2.0, 0.5)] {
                let r = expansion_residuals(&an, a, b)?;
                let mono = r.windows(2).all(|w| w[1] < w[0]);
                ok &= mono;
                detail.push(format!(
                    "{name}({a},{b}): {}",
                    r.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(" > ")
                ));
            }
        }
        Ok((ok, detail.join("; ")))
    })();
    finish(5, "expansion vs master transform", start, out)
}

pub fn criterion_6() -> CriterionResult {
    let start = Instant::now();
    let out = (|| {
        let an = Analysis::new(brownian_sp())?;
        let cfg = InversionConfig::default();
        let mut ok = true;
        let mut detail = Vec::new();
        for (a, b) in [(0.0, 0.0), (1.0, 1.0)] {
            let g = invert_time(&an, a, b, &[20.0, 30.0], &cfg)?;
            for (i, (t, tol)) in [(20.0, 0.05), (30.0, 0.02)].into_iter().enumerate() {
                let d = (g.raw[i] / tauberian_tail(&an, a, b, t, true)? - 1.0).abs();
                ok &= d <= tol;
                detail.push(format!("({a},{b}) t={t}: {d:.2e}"));
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        Ok((ok && elapsed < 5.0, format!("|raw/tail - 1|: {}", detail.join(", "))))
    })();
    finish(6, "Tauberian tail vs inversion", start, out)
}

pub fn criterion_7() -> CriterionResult {
    let start = Instant::now();
    let out = (|| {
        let an = Analysis::new(brownian_sp())?;
        let p = rate_profile(&an, 1.0, 1.0, &[10.0, 20.0, 40.0], &InversionConfig::default())?;
        let dist = |lim: f64| -> Vec<f64> { p.profile.iter().map(|v| (v - lim).abs()).collect() };
        // the stated target is ξ̃ itself; the Tauberian ratio gives −(3/2) ξ̃
        let stated = dist(p.xi_tilde);
        let tauberian = dist(p.predicted_limit);
        Ok((
            stated[2] < 0.5 * stated[0],
            format!(
                "profile at t = 10, 20, 40: {:.6} {:.6} {:.6}; distance to (C3 - mu C3(0,0))/C1(0,0) = {:.6}: \
                 {:.3e} {:.3e} {:.3e}; distance to the Tauberian limit -3/2 of that = {:.6}: {:.3e} {:.3e} {:.3e}",
                p.profile[0],
                p.profile[1],
                p.profile[2],
                p.xi_tilde,
                stated[0],
                stated[1],
                stated[2],
                p.predicted_limit,
                tauberian[0],
                tauberian[1],
                tauberian[2]
            ),
        ))
    })();
    finish(7, "1/t rate law (Brownian, alpha = beta = 1)", start, out)
}

pub fn criterion_8(opts: &VerifyOptions) -> CriterionResult {
    let start = Instant::now();
    let out = (|| {
        let model = brownian_sp();
        let an = Analysis::new(model.clone())?;
        let exact = invert_time(&an, 0.0, 0.0, &[10.0], &InversionConfig::default())?.survival[0];
        let tilted = estimate_survival(
            &SimConfig::new(model.clone(), 10.0, opts.mc_replications, opts.seed).with_tilt(Tilt::ThetaStar),
        )?;
        let z10 = (tilted.value - exact) / tilted.std_error;
        let t5 = estimate_survival(
            &SimConfig::new(model.clone(), 5.0, opts.mc_replications, opts.seed + 1).with_tilt(Tilt::ThetaStar),
        )?;
        let u5 = estimate_survival(&SimConfig::new(model, 5.0, opts.mc_replications, opts.seed + 2))?;
        let z5 = (t5.value - u5.value) / (t5.std_error.powi(2) + u5.std_error.powi(2)).sqrt();
        let elapsed = start.elapsed().as_secs_f64();
        Ok((
            z10.abs() <= 3.0 && z5.abs() <= 3.0 && elapsed < 120.0,
            format!(
                "t=10 tilted {:.6e} ± {:.1e} vs inversion {exact:.6e} (z = {z10:.2}); \
                 t=5 tilted {:.6e} vs untilted {:.6e} (z = {z5:.2}); {} replications",
                tilted.value, tilted.std_error, t5.value, u5.value, opts.mc_replications
            ),
        ))
    })();
    finish(8, "Monte Carlo survival cross-check", start, out)
}

pub fn erlang_density(k: i32, x: f64) -> f64 {
    let fact: f64 = (1..k).map(f64::from).product();
    x.powi(k - 1) * (-x).exp() / fact
}

pub fn criterion_9() -> CriterionResult {
    let start = Instant::now();
    let out = (|| {
        let an = Analysis::new(brownian_sp())?;
        let grid: Vec<f64> = (0..8).map(|i| 0.2 + 3.8 * i as f64 / 7.0).collect();
        let cfg = InversionConfig::default();
        let mu = invert_2d_density(&an, DensityKind::Mu, &grid, &grid, &cfg)?;
        let xi = invert_2d_density(&an, DensityKind::Xi, &grid, &grid, &cfg)?;
        let (mut wm, mut wx) = (0.0_f64, 0.0_f64);
        for (i, &x) in grid.iter().enumerate() {
            for (j, &y) in grid.iter().enumerate() {
                let f = |p: i32, q: i32| erlang_density(p, x) * erlang_density(q, y);
                wm = wm.max(rel(mu.at(i, j), f(2, 2)));
                let exact = 2.0 * f(4, 2) + 2.0 * f(2, 4) - 4.0 * f(2, 2);
                wx = wx.max((xi.at(i, j) - exact).abs());
            }
        }
        let all = mu.converged.iter().chain(&xi.converged).all(|&c| c);
        Ok((
            all && wm <= 1e-4 && wx <= 1e-3,
            format!("8x8 grid on [0.2,4]^2: mu max rel {wm:.2e}, xi max abs {wx:.2e}, all converged: {all}"),
        ))
    })();
    finish(9, "2D density inversion (Brownian)", start, out)
}

/// Property checks for one model; returns the list of failures.
pub fn model_properties(model: &LevyModel) -> Result<Vec<String>> {
    let mut fails = Vec::new();
    let an = Analysis::new(model.clone())?;
    let mu0 = an.mu_tilde(0.0, 0.0)?;
    if (mu0 - 1.0).abs() > 1e-12 {
        fails.push(format!("mu(0,0) = {mu0}"));
    }
    let xi0 = an.xi_tilde(0.0, 0.0)?;
    if xi0.abs() > 1e-12 {
        fails.push(format!("xi(0,0) = {xi0}"));
    }
    for i in 0..=24 {
        let th = 10f64.powf(-2.0 + i as f64 / 4.0);
        let v = th * master_l(&an, Complex64::from(th), 0.0, 0.0)?.re;
        if !(v > 0.0 && v < 1.0) {
            fails.push(format!("theta L(theta) = {v} at theta = {th}"));
        }
    }
    let times: Vec<f64> = (0..12).map(|i| 0.5 * 1.4f64.powi(i)).collect();
    let g = invert_time(&an, 0.0, 0.0, &times, &InversionConfig::default())?;
    if g.survival.windows(2).any(|w| w[1] > w[0]) || g.survival.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
        fails.push(format!("survival not monotone in (0,1]: {:?}", g.survival));
    }
    let ts = an.theta_star();
    for i in 0..20 {
        let eta = ts + 0.05 * (i as f64) * (1.0 + ts.abs()) + 1e-3;
        let back = phi_with(model, &an.critical, model.psi(eta, 0)?)?;
        if (back - eta).abs() > 1e-9 * eta.abs().max(1.0) {
            fails.push(format!("Phi(psi({eta})) = {back}"));
        }
    }
    Ok(fails)
}

pub fn criterion_10() -> CriterionResult {
    let start = Instant::now();
    let out = {
        let mut bad = Vec::new();
        let models = builtin_models();
        for (name, model) in &models {
            match model_properties(model) {
                Ok(f) if f.is_empty() => {}
                Ok(f) => bad.push(format!("{name}: {}", f.join("; "))),
                Err(e) => bad.push(format!("{name}: error {e}")),
            }
        }
        Ok(if bad.is_empty() {
            (true, format!("{} models, all properties hold", models.len()))
        } else {
            (false, bad.join(" | "))
        })
    };
    finish(10, "property suite on built-in models", start, out)
}

pub fn run_all(opts: &VerifyOptions) -> Vec<CriterionResult> {
    vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(opts),
        criterion_9(),
        criterion_10(),
    ]
}
