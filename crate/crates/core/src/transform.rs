//! The double transform `L(ϑ; α, β) = ∫₀^∞ e^{−ϑt} E_π[e^{−αQ(0)−βQ(t)}, T>t] dt`,
//! its inversion in time, Tauberian tails and convergence-rate profiles.
//!
//! `L` has its rightmost singularity at the branch point `ζ* < 0`, so the
//! time-domain functions decay like `e^{ζ* t}`. All inversions therefore act
//! on the shifted transform `z ↦ L(ζ* + z)`, whose original
//! `e^{−ζ* t} E_π[…, T>t]` only decays algebraically; the exponential factor
//! is restored afterwards.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::expansion::Analysis;
use crate::exponent::{Kind, PhiTracker};
use crate::inversion::{invert_complex, invert_real, EulerParams};
use crate::quadrature::unit_interval_rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InversionMethod {
    #[default]
    EulerSummation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub method: InversionMethod,
    /// Transform evaluations per inversion; odd, at least 21.
    pub terms: usize,
    /// Largest accepted Euler tail estimate, relative to the survival value.
    pub precision_target: f64,
    /// Contour parameter `A`: the Bromwich line sits at `Re ϑ = ζ* + A/(2t)`
    /// and the discretisation error is of order `e^{−A}`.
    pub contour_a: f64,
    pub t_min: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            method: InversionMethod::EulerSummation,
            terms: 41,
            precision_target: 1e-8,
            contour_a: 18.4,
            t_min: 1e-3,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<EulerParams> {
        if !(self.t_min > 0.0) {
            return Err(QsdError::InvalidConfig(format!(
                "t_min must be positive, got {}",
                self.t_min
            )));
        }
        if !(self.precision_target > 0.0) {
            return Err(QsdError::InvalidConfig("precision_target must be positive".into()));
        }
        EulerParams::from_terms(self.contour_a, self.terms)
    }
}

/// `L(·; α, β)` with a right-inverse evaluator that continues along contours.
pub struct MasterTransform<'a> {
    an: &'a Analysis,
    alpha: f64,
    beta: f64,
    tracker: PhiTracker<'a>,
}

impl<'a> MasterTransform<'a> {
    pub fn new(an: &'a Analysis, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0) {
            return Err(QsdError::Domain {
                value: alpha.min(beta),
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        Ok(Self {
            an,
            alpha,
            beta,
            tracker: PhiTracker::new(&an.model, an.critical),
        })
    }

    pub fn eval(&mut self, theta: Complex64) -> Result<Complex64> {
        if theta.im < 0.0 {
            return Ok(self.eval(theta.conj())?.conj());
        }
        if theta.im == 0.0 && theta.re < self.an.zeta_star() {
            return Err(QsdError::BelowBranchPoint {
                s: theta.re,
                zeta_star: self.an.zeta_star(),
            });
        }
        let phi = self.tracker.eval(theta)?;
        let an = self.an;
        let (alpha, beta) = (Complex64::from(self.alpha), Complex64::from(self.beta));
        let v = match an.kind() {
            Kind::SpectrallyNegative => {
                let a = alpha + an.phi0;
                let delta = phi - a;
                // (Φ − a)/(ϑ − ψ(a)) is a divided difference of Φ's inverse
                let ratio = if delta.norm() <= 0.1 * (1.0 + a.norm()) {
                    Complex64::from(1.0) / mean_derivative(|x| an.psi(x, 1), a, delta)?
                } else {
                    delta / (theta - an.psi(a, 0)?)
                };
                ratio / (phi + beta) * (an.phi0 / (a + beta))
            }
            Kind::SpectrallyPositive => {
                let delta = phi - beta;
                let bracket = if delta.norm() <= 0.1 * (1.0 + self.beta) {
                    let dg = mean_derivative(|x| Ok(an.ratio_derivs_upto(x, 1)?[1]), alpha + beta, delta)?;
                    let dpsi = mean_derivative(|x| an.psi(x, 1), beta, delta)?;
                    -dg / dpsi
                } else {
                    let g_ab = an.ratio_derivs_upto(alpha + beta, 0)?[0];
                    let g_phi = an.ratio_derivs_upto(alpha + phi, 0)?[0];
                    (g_ab - g_phi) / (theta - an.psi(beta, 0)?)
                };
                bracket * an.slope0
            }
        };
        if !v.is_finite() {
            return Err(QsdError::SingularDenominator(format!(
                "master transform not finite at theta = {theta}"
            )));
        }
        Ok(v)
    }
}

/// `∫₀¹ f(x₀ + τδ) dτ` by Gauss–Legendre.
fn mean_derivative<F>(f: F, x0: Complex64, delta: Complex64) -> Result<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let mut acc = Complex64::from(0.0);
    for &(tau, w) in unit_interval_rule() {
        acc += f(x0 + delta * tau)? * w;
    }
    Ok(acc)
}

/// One-off evaluation of `L(ϑ; α, β)`.
pub fn master_l(an: &Analysis, theta: Complex64, alpha: f64, beta: f64) -> Result<Complex64> {
    MasterTransform::new(an, alpha, beta)?.eval(theta)
}

/// Time-domain values recovered from `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformGrid {
    pub alpha: f64,
    pub beta: f64,
    pub times: Vec<f64>,
    /// `E_π[e^{−αQ(0)−βQ(t)}, T>t]`.
    pub raw: Vec<f64>,
    /// `P_π(T>t)`.
    pub survival: Vec<f64>,
    pub conditional: Vec<f64>,
    /// `e^{−ζ* t}` times `raw` and `survival`; these stay O(t^{−3/2}).
    pub scaled_raw: Vec<f64>,
    pub scaled_survival: Vec<f64>,
    /// Largest Euler tail estimate relative to the scaled survival value.
    pub relative_tail: Vec<f64>,
}

/// Scaled original `e^{−ζ* t} E_π[e^{−αQ(0)−βQ(t)}, T>t]` and its tail estimate.
pub fn invert_scaled(an: &Analysis, alpha: f64, beta: f64, t: f64, p: &EulerParams) -> Result<(f64, f64)> {
    let mut l = MasterTransform::new(an, alpha, beta)?;
    let zs = an.zeta_star();
    let r = invert_real(|z| l.eval(z + zs), t, p)?;
    Ok((r.value, r.tail_estimate))
}

pub fn invert_time(
    an: &Analysis,
    alpha: f64,
    beta: f64,
    times: &[f64],
    config: &InversionConfig,
) -> Result<TransformGrid> {
    let p = config.validate()?;
    if let Some(&t) = times.iter().find(|&&t| !(t >= config.t_min)) {
        return Err(QsdError::InvalidConfig(format!(
            "time {t} is below t_min = {}",
            config.t_min
        )));
    }
    let zs = an.zeta_star();
    let rows: Vec<(f64, f64, f64)> = times
        .par_iter()
        .map(|&t| -> Result<(f64, f64, f64)> {
            let (gs, es) = invert_scaled(an, 0.0, 0.0, t, &p)?;
            let (gr, er) = if alpha == 0.0 && beta == 0.0 {
                (gs, es)
            } else {
                invert_scaled(an, alpha, beta, t, &p)?
            };
            let rel = es.max(er) / gs.abs();
            if !(rel <= config.precision_target) {
                return Err(QsdError::ConvergenceFailure(format!(
                    "Euler tail estimate {rel:.3e} exceeds the target {:.1e} at t = {t}",
                    config.precision_target
                )));
            }
            Ok((gr, gs, rel))
        })
        .collect::<Result<_>>()?;
    let mut grid = TransformGrid {
        alpha,
        beta,
        times: times.to_vec(),
        raw: Vec::with_capacity(times.len()),
        survival: Vec::with_capacity(times.len()),
        conditional: Vec::with_capacity(times.len()),
        scaled_raw: Vec::with_capacity(times.len()),
        scaled_survival: Vec::with_capacity(times.len()),
        relative_tail: Vec::with_capacity(times.len()),
    };
    for (&t, &(gr, gs, rel)) in times.iter().zip(&rows) {
        let decay = (zs * t).exp();
        grid.raw.push(gr * decay);
        grid.survival.push(gs * decay);
        grid.conditional.push(gr / gs);
        grid.scaled_raw.push(gr);
        grid.scaled_survival.push(gs);
        grid.relative_tail.push(rel);
    }
    Ok(grid)
}

/// `Γ(−1/2)`.
pub const GAMMA_MINUS_HALF: f64 = -3.544_907_701_811_032;
/// `Γ(−3/2)`.
pub const GAMMA_MINUS_THREE_HALVES: f64 = 2.363_271_801_207_355;

/// Two-term asymptotic of `E_π[e^{−αQ(0)−βQ(t)}, T>t]` transferred from the
/// expansion of `L` at `ζ*`; `second_order = false` keeps only the `t^{−3/2}` term.
pub fn tauberian_tail(an: &Analysis, alpha: f64, beta: f64, t: f64, second_order: bool) -> Result<f64> {
    if !(t > 0.0) {
        return Err(QsdError::InvalidConfig(format!("time must be positive, got {t}")));
    }
    let c = an.joint_coeffs(alpha, beta)?;
    let mut v = c.c1 / GAMMA_MINUS_HALF * t.powf(-1.5);
    if second_order {
        v += c.c3 / GAMMA_MINUS_THREE_HALVES * t.powf(-2.5);
    }
    Ok((an.zeta_star() * t).exp() * v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    pub alpha: f64,
    pub beta: f64,
    pub mu_tilde: f64,
    /// `ξ̃ = (C₃ − μ̃ C₃(0,0))/C₁(0,0)`.
    pub xi_tilde: f64,
    /// `lim t·(conditional − μ̃)`. Dividing the two-term tails of the joint
    /// and the survival transform gives `Γ(−1/2)/Γ(−3/2) · ξ̃ = −(3/2) ξ̃`.
    pub predicted_limit: f64,
    /// `t·(conditional(t) − μ̃)`.
    pub profile: Vec<f64>,
    pub grid: TransformGrid,
}

impl RateProfile {
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.times.iter().copied().zip(self.profile.iter().copied())
    }
}

pub fn rate_profile(
    an: &Analysis,
    alpha: f64,
    beta: f64,
    times: &[f64],
    config: &InversionConfig,
) -> Result<RateProfile> {
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(QsdError::InvalidConfig("time grid must be strictly increasing".into()));
    }
    let mu = an.mu_tilde(alpha, beta)?;
    let xi_tilde = an.xi_tilde(alpha, beta)?;
    let grid = invert_time(an, alpha, beta, times, config)?;
    let profile = grid
        .times
        .iter()
        .zip(&grid.conditional)
        .map(|(t, c)| if alpha == 0.0 && beta == 0.0 { 0.0 } else { t * (c - mu) })
        .collect();
    Ok(RateProfile {
        alpha,
        beta,
        mu_tilde: mu,
        xi_tilde,
        predicted_limit: GAMMA_MINUS_HALF / GAMMA_MINUS_THREE_HALVES * xi_tilde,
        profile,
        grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    /// Quasi-stationary measure, transform `μ̃`.
    Mu,
    /// Second-order (signed) measure, transform `ξ̃`.
    Xi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub which: DensityKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major over `x`: entry `i·y.len() + j` is the density at `(x[i], y[j])`.
    pub density: Vec<f64>,
    /// `false` where the Euler tail estimate missed the target; the density there is NaN.
    pub converged: Vec<bool>,
}

impl DensityGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.y.len() + j]
    }
}

/// Density of `μ` or `ξ` on a grid, by Euler inversion in `α` (variable `x`)
/// nested inside Euler inversion in `β` (variable `y`).
pub fn invert_2d_density(
    an: &Analysis,
    which: DensityKind,
    x_grid: &[f64],
    y_grid: &[f64],
    config: &InversionConfig,
) -> Result<DensityGrid> {
    let p = config.validate()?;
    if x_grid.is_empty() || y_grid.is_empty() {
        return Err(QsdError::InvalidConfig("density grids must be non-empty".into()));
    }
    if x_grid.iter().chain(y_grid).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(QsdError::InvalidConfig("density grid points must be positive".into()));
    }
    let tol = config.precision_target.max(1e-6);
    let ny = y_grid.len();
    let points: Vec<(f64, bool)> = (0..x_grid.len() * ny)
        .into_par_iter()
        .map(|idx| density_point(an, which, x_grid[idx / ny], y_grid[idx % ny], &p, tol).unwrap_or((f64::NAN, false)))
        .collect();
    let (density, converged) = points
        .into_iter()
        .map(|(v, ok)| if ok { (v, true) } else { (f64::NAN, false) })
        .unzip();
    Ok(DensityGrid {
        which,
        x: x_grid.to_vec(),
        y: y_grid.to_vec(),
        density,
        converged,
    })
}

fn density_point(an: &Analysis, which: DensityKind, x: f64, y: f64, p: &EulerParams, tol: f64) -> Result<(f64, bool)> {
    let transform = |a: Complex64, b: Complex64| match which {
        DensityKind::Mu => an.mu_tilde_closed(a, b),
        DensityKind::Xi => an.xi_tilde_generic(a, b),
    };
    let mut inner_ok = true;
    let outer = invert_real(
        |b| {
            let r = invert_complex(|a| transform(a, b), x, p)?;
            inner_ok &= r.tail_estimate <= tol * r.value.norm().max(1.0);
            Ok(r.value)
        },
        y,
        p,
    )?;
    let ok = inner_ok && outer.tail_estimate <= tol * outer.value.abs().max(1.0);
    Ok((outer.value, ok))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::LevyModel;

    fn bm() -> Analysis {
        Analysis::new(LevyModel::brownian(Kind::SpectrallyPositive, 1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn gamma_constants() {
        let g = std::f64::consts::PI.sqrt();
        let (a, b) = (-2.0 * g, 4.0 * g / 3.0);
        assert!((a - GAMMA_MINUS_HALF).abs() < 1e-15);
        assert!((b - GAMMA_MINUS_THREE_HALVES).abs() < 1e-15);
    }

    #[test]
    fn theta_l_in_unit_interval() {
        let an = bm();
        for th in [0.01, 0.1, 1.0, 10.0, 1e3, 1e4] {
            let v = th * master_l(&an, Complex64::from(th), 0.0, 0.0).unwrap().re;
            assert!(v > 0.0 && v < 1.0, "{th}: {v}");
        }
        let big = 1e4 * master_l(&an, Complex64::from(1e4), 0.0, 0.0).unwrap().re;
        assert!((big - 1.0).abs() < 0.05);
    }

    #[test]
    fn conjugate_symmetry() {
        let an = bm();
        let th = Complex64::new(0.3, 2.0);
        let a = master_l(&an, th, 1.0, 0.5).unwrap();
        let b = master_l(&an, th.conj(), 1.0, 0.5).unwrap();
        assert!((a - b.conj()).norm() < 1e-15);
    }

    #[test]
    fn below_branch_point_rejected() {
        assert!(master_l(&bm(), Complex64::from(-0.6), 0.0, 0.0).is_err());
    }

    #[test]
    fn removable_point_is_continuous() {
        // ψ̂(β) = ϑ makes the SP formula 0/0
        let an = bm();
        let beta = 0.5;
        let th = beta + beta * beta / 2.0;
        let at = master_l(&an, Complex64::from(th), 1.0, beta).unwrap();
        let off = master_l(&an, Complex64::from(th + 1e-6), 1.0, beta).unwrap();
        assert!((at - off).norm() < 1e-5 * at.norm());
    }

    #[test]
    fn zero_arguments_give_unit_conditional() {
        let g = invert_time(&bm(), 0.0, 0.0, &[1.0, 5.0], &InversionConfig::default()).unwrap();
        assert_eq!(g.conditional, vec![1.0, 1.0]);
    }

    #[test]
    fn times_below_minimum_rejected() {
        let cfg = InversionConfig::default();
        assert!(invert_time(&bm(), 0.0, 0.0, &[1e-4], &cfg).is_err());
    }
}
