//! Square-root expansions at the branch point `ζ*`.
//!
//! Near `ζ*` the right inverse behaves like
//! `Φ(s) = ϑ* + c₁ (s−ζ*)^{1/2} + c₂ (s−ζ*) + c₃ (s−ζ*)^{3/2} + o(·)`, and the
//! double transform `L(ϑ; α, β)` inherits a four-term expansion with
//! coefficients `C₀…C₃`. The quasi-stationary transform is `μ̃ = C₁/C₁(0,0)`
//! and the `1/t` correction is `ξ̃ = (C₃ − μ̃ C₃(0,0)) / C₁(0,0)`.

use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::exponent::{check_assumptions, critical_point, phi_with, AssumptionReport, CriticalData, Kind, LevyModel};
use crate::quadrature::unit_interval_rule;
use crate::scalar::Scalar;

/// `c₁, c₂, c₃` of the expansion of `Φ` at `ζ*`.
///
/// The constants follow from inserting `η − ϑ* = c₁ h^{1/2} + c₂ h + c₃ h^{3/2}`
/// into the Taylor series `ψ(η) − ζ* = ψ''(η−ϑ*)²/2 + ψ'''(η−ϑ*)³/6 + ψ⁗(η−ϑ*)⁴/24`
/// and matching powers of `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub critical: CriticalData,
}

impl SeriesConstants {
    pub fn from_critical(critical: CriticalData) -> Self {
        let p2 = critical.psi_dd;
        let p3 = critical.psi_d3;
        let p4 = critical.psi_d4;
        let sqrt2 = std::f64::consts::SQRT_2;
        Self {
            c1: (2.0 / p2).sqrt(),
            c2: -p3 / (3.0 * p2 * p2),
            c3: 5.0 / (18.0 * sqrt2) * p3 * p3 / p2.powf(3.5) - p4 / (6.0 * sqrt2 * p2.powf(2.5)),
            critical,
        }
    }

    /// Truncated four-term expansion of `Φ` at `s ≥ ζ*`.
    pub fn phi_expansion(&self, s: f64) -> Result<f64> {
        let h = s - self.critical.zeta_star;
        if !(h >= 0.0) {
            return Err(QsdError::BelowBranchPoint {
                s,
                zeta_star: self.critical.zeta_star,
            });
        }
        let r = h.sqrt();
        Ok(self.critical.theta_star + r * (self.c1 + r * (self.c2 + r * self.c3)))
    }
}

/// `C₀(α,β)…C₃(α,β)` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointExpansion {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl JointExpansion {
    /// `Σ_k C_k h^{k/2}`.
    pub fn eval(&self, h: f64) -> f64 {
        let r = h.sqrt();
        self.c0 + r * (self.c1 + r * (self.c2 + r * self.c3))
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.c0, self.c1, self.c2, self.c3]
    }
}

/// A certified model together with everything the expansion needs.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub model: LevyModel,
    pub critical: CriticalData,
    pub constants: SeriesConstants,
    pub report: AssumptionReport,
    /// `Φ(0)`; zero for spectrally positive models.
    pub phi0: f64,
    /// Exponent slope at the origin.
    pub slope0: f64,
    c1_origin: f64,
    c3_origin: f64,
    /// Below this modulus `u/ψ(u)` is evaluated through its integral form.
    ratio_guard: f64,
}

impl Analysis {
    pub fn new(model: LevyModel) -> Result<Self> {
        let report = check_assumptions(&model);
        if !report.stable {
            return Err(QsdError::Unstable(report.messages.join("; ")));
        }
        let critical = critical_point(&model)?;
        if !report.certified() {
            return Err(QsdError::Unsupported(format!(
                "model not certified for the expansion pipeline: {}",
                report.messages.join("; ")
            )));
        }
        let constants = SeriesConstants::from_critical(critical);
        let phi0 = match model.kind {
            Kind::SpectrallyNegative => phi_with(&model, &critical, 0.0)?,
            Kind::SpectrallyPositive => 0.0,
        };
        let slope0 = model.psi(0.0, 1)?;
        let (lo, hi) = model.domain();
        let ratio_guard = (0.25 * critical.theta_star.abs()).min(0.5 * lo.abs().min(hi.abs()));
        let mut a = Self {
            model,
            critical,
            constants,
            report,
            phi0,
            slope0,
            c1_origin: f64::NAN,
            c3_origin: f64::NAN,
            ratio_guard,
        };
        let origin = a.coefficients_with(&a.constants, 0.0, 0.0)?;
        a.c1_origin = origin[1];
        a.c3_origin = origin[3];
        Ok(a)
    }

    pub fn kind(&self) -> Kind {
        self.model.kind
    }

    pub fn theta_star(&self) -> f64 {
        self.critical.theta_star
    }

    pub fn zeta_star(&self) -> f64 {
        self.critical.zeta_star
    }

    /// `C₁(0,0)`.
    pub fn c1_origin(&self) -> f64 {
        self.c1_origin
    }

    /// `C₃(0,0)`.
    pub fn c3_origin(&self) -> f64 {
        self.c3_origin
    }

    pub fn phi(&self, s: f64) -> Result<f64> {
        phi_with(&self.model, &self.critical, s)
    }

    pub fn psi<S: Scalar>(&self, x: S, order: usize) -> Result<S> {
        S::exponent(&self.model, x, order)
    }

    /// `u/ψ(u)` and its first three derivatives.
    ///
    /// `ψ` vanishes at the origin, so `u/ψ(u) = 1/r(u)` with
    /// `r(u) = ∫₀¹ ψ'(τu) dτ`. Near the origin the derivatives are taken from
    /// `r^{(k)}(u) = ∫₀¹ τ^k ψ^{(k+1)}(τu) dτ`, which has no removable
    /// singularity; elsewhere the quotient rule is used directly.
    pub fn ratio_derivs<S: Scalar>(&self, u: S) -> Result<[S; 4]> {
        self.ratio_derivs_upto(u, 3)
    }

    /// As [`Analysis::ratio_derivs`], filling only orders `0..=upto`.
    pub fn ratio_derivs_upto<S: Scalar>(&self, u: S, upto: usize) -> Result<[S; 4]> {
        let zero = S::lift(0.0);
        let mut out = [zero; 4];
        if u.abs() >= self.ratio_guard {
            let mut p = [zero; 4];
            for (k, pk) in p.iter_mut().enumerate().take(upto + 1) {
                *pk = self.psi(u, k)?;
            }
            let [p, p1, p2, p3] = p;
            if p == zero {
                return Err(QsdError::SingularDenominator(format!("exponent vanishes at {u:?}")));
            }
            let ip = S::lift(1.0) / p;
            let ip2 = ip * ip;
            let ip3 = ip2 * ip;
            let ip4 = ip3 * ip;
            let two = S::lift(2.0);
            let three = S::lift(3.0);
            let six = S::lift(6.0);
            out[0] = u * ip;
            if upto >= 1 {
                out[1] = (p - u * p1) * ip2;
            }
            if upto >= 2 {
                out[2] = -two * p1 * ip2 - u * p2 * ip2 + two * u * p1 * p1 * ip3;
            }
            if upto >= 3 {
                out[3] = -three * p2 * ip2 + six * p1 * p1 * ip3 - u * p3 * ip2 + six * u * p1 * p2 * ip3
                    - six * u * p1 * p1 * p1 * ip4;
            }
            return Ok(out);
        }
        let mut r = [zero; 4];
        for &(tau, w) in unit_interval_rule() {
            let x = u * S::lift(tau);
            let mut tk = w;
            for (k, rk) in r.iter_mut().enumerate().take(upto + 1) {
                *rk = *rk + self.psi(x, k + 1)? * S::lift(tk);
                tk *= tau;
            }
        }
        let [r0, r1, r2, r3] = r;
        let i0 = S::lift(1.0) / r0;
        let i2 = i0 * i0;
        let i3 = i2 * i0;
        let i4 = i3 * i0;
        out[0] = i0;
        if upto >= 1 {
            out[1] = -r1 * i2;
        }
        if upto >= 2 {
            out[2] = S::lift(2.0) * r1 * r1 * i3 - r2 * i2;
        }
        if upto >= 3 {
            out[3] = S::lift(-6.0) * r1 * r1 * r1 * i4 + S::lift(6.0) * r1 * r2 * i3 - r3 * i2;
        }
        Ok(out)
    }

    /// `[C₀, C₁, C₂, C₃]` at `(α, β)` for arbitrary expansion constants.
    pub fn coefficients_with<S: Scalar>(&self, consts: &SeriesConstants, alpha: S, beta: S) -> Result<[S; 4]> {
        let ts = S::lift(self.critical.theta_star);
        let zs = S::lift(self.critical.zeta_star);
        let (a1, a2, a3) = (S::lift(consts.c1), S::lift(consts.c2), S::lift(consts.c3));
        let zero = S::lift(0.0);
        match self.model.kind {
            Kind::SpectrallyNegative => {
                let phi0 = S::lift(self.phi0);
                let shifted = alpha + phi0;
                let b = beta + ts;
                let gap = zs - self.psi(shifted, 0)?;
                let total = alpha + beta + phi0;
                if b == zero || gap == zero || total == zero {
                    return Err(QsdError::SingularDenominator(format!(
                        "spectrally negative coefficients at alpha = {alpha:?}, beta = {beta:?}"
                    )));
                }
                let num = alpha - ts + phi0;
                let c0 = -phi0 / total * num / (b * gap);
                let c1 = a1 * phi0 / (b * b * gap);
                let c2 = phi0 * (b * b * num / total - (a2 * b - a1 * a1) * (-gap)) / (b * b * b * gap * gap);
                let c3 = phi0 * a3 / (b * b * gap)
                    - phi0 / (b * b * b * b * gap * gap)
                        * (a1 * b * (S::lift(2.0) * a2 * gap + b) + a1 * a1 * a1 * (-gap));
                Ok([c0, c1, c2, c3])
            }
            Kind::SpectrallyPositive => {
                let slope = S::lift(self.slope0);
                let u = alpha + ts;
                let d = zs - self.psi(beta, 0)?;
                if d == zero {
                    return Err(QsdError::SingularDenominator(format!(
                        "zeta* equals the exponent at beta = {beta:?}"
                    )));
                }
                let [g_u, g1, g2, g3] = self.ratio_derivs(u)?;
                let [g_ab, ..] = self.ratio_derivs_upto(alpha + beta, 0)?;
                let big_g = g_ab - g_u;
                let half = S::lift(0.5);
                let sixth = S::lift(1.0 / 6.0);
                let c0 = slope * big_g / d;
                let c1 = -slope * g1 * a1 / d;
                let c2 = slope * (-(g1 * a2 + g2 * a1 * a1 * half) / d - big_g / (d * d));
                let c3 = slope * (-(g1 * a3 + g2 * a1 * a2 + g3 * a1 * a1 * a1 * sixth) / d + g1 * a1 / (d * d));
                Ok([c0, c1, c2, c3])
            }
        }
    }

    pub fn joint_coeffs(&self, alpha: f64, beta: f64) -> Result<JointExpansion> {
        check_transform_args(alpha, beta)?;
        let [c0, c1, c2, c3] = self.coefficients_with(&self.constants, alpha, beta)?;
        Ok(JointExpansion {
            c0,
            c1,
            c2,
            c3,
            alpha,
            beta,
        })
    }

    /// Closed-form transform of the quasi-stationary measure.
    pub fn mu_tilde_closed<S: Scalar>(&self, alpha: S, beta: S) -> Result<S> {
        let ts = S::lift(self.critical.theta_star);
        let zs = S::lift(self.critical.zeta_star);
        match self.model.kind {
            Kind::SpectrallyNegative => {
                let p = self.psi(alpha + S::lift(self.phi0), 0)?;
                let b = ts + beta;
                Ok(-zs / (p - zs) * (ts * ts) / (b * b))
            }
            Kind::SpectrallyPositive => {
                // ψ̂(ϑ*)² (ψ̂(u) − uψ̂'(u)) / (ψ̂(u)² (ψ̂(ϑ*) − ψ̂(β))), u = α+ϑ*
                let [_, g1, ..] = self.ratio_derivs_upto(alpha + ts, 1)?;
                let d = zs - self.psi(beta, 0)?;
                Ok(zs * zs * g1 / d)
            }
        }
    }

    /// `C₁(α,β)/C₁(0,0)`.
    pub fn mu_tilde_ratio<S: Scalar>(&self, alpha: S, beta: S) -> Result<S> {
        let c = self.coefficients_with(&self.constants, alpha, beta)?;
        Ok(c[1] / S::lift(self.c1_origin))
    }

    pub fn mu_tilde(&self, alpha: f64, beta: f64) -> Result<f64> {
        check_transform_args(alpha, beta)?;
        self.mu_tilde_closed(alpha, beta)
    }

    /// `(C₃(α,β) − μ̃(α,β) C₃(0,0)) / C₁(0,0)`.
    pub fn xi_tilde_generic<S: Scalar>(&self, alpha: S, beta: S) -> Result<S> {
        let c = self.coefficients_with(&self.constants, alpha, beta)?;
        let mu = self.mu_tilde_closed(alpha, beta)?;
        Ok((c[3] - mu * S::lift(self.c3_origin)) / S::lift(self.c1_origin))
    }

    pub fn xi_tilde(&self, alpha: f64, beta: f64) -> Result<f64> {
        check_transform_args(alpha, beta)?;
        self.xi_tilde_generic(alpha, beta)
    }

    /// Gamma(2, ϑ*) density of the `y`-marginal, spectrally negative only.
    pub fn mu_marginal_density_sn(&self, y: f64) -> Result<f64> {
        if self.model.kind != Kind::SpectrallyNegative {
            return Err(QsdError::WrongKind {
                expected: "spectrally negative",
            });
        }
        if !(y >= 0.0) {
            return Err(QsdError::Domain {
                value: y,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let ts = self.critical.theta_star;
        Ok(ts * ts * y * (-ts * y).exp())
    }
}

fn check_transform_args(alpha: f64, beta: f64) -> Result<()> {
    if alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite() {
        Ok(())
    } else {
        Err(QsdError::Domain {
            value: if alpha >= 0.0 { beta } else { alpha },
            lo: 0.0,
            hi: f64::INFINITY,
        })
    }
}

pub fn series_constants(model: &LevyModel) -> Result<SeriesConstants> {
    Ok(SeriesConstants::from_critical(critical_point(model)?))
}

pub fn phi_expansion_eval(model: &LevyModel, s: f64) -> Result<f64> {
    series_constants(model)?.phi_expansion(s)
}

pub fn joint_coeffs(model: &LevyModel, alpha: f64, beta: f64) -> Result<JointExpansion> {
    Analysis::new(model.clone())?.joint_coeffs(alpha, beta)
}

pub fn mu_tilde(model: &LevyModel, alpha: f64, beta: f64) -> Result<f64> {
    Analysis::new(model.clone())?.mu_tilde(alpha, beta)
}

pub fn xi_tilde(model: &LevyModel, alpha: f64, beta: f64) -> Result<f64> {
    Analysis::new(model.clone())?.xi_tilde(alpha, beta)
}

pub fn mu_marginal_density_sn(model: &LevyModel, y: f64) -> Result<f64> {
    Analysis::new(model.clone())?.mu_marginal_density_sn(y)
}
