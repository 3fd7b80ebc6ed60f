//! Spectrally one-sided Lévy models and their Laplace exponents.
//!
//! Sign conventions follow the queueing picture. `X` is the netput process
//! whose reflection at zero is the workload.
//!
//! * [`Kind::SpectrallyNegative`]: the exponent is `ψ(η) = log E e^{η X(1)}`,
//!   its minimiser `ϑ*` is positive.
//! * [`Kind::SpectrallyPositive`]: the exponent is the dual
//!   `ψ̂(η) = log E e^{-η X(1)}`, its minimiser `ϑ*` is negative.
//!
//! In both cases the exponent is convex, vanishes at the origin, and has a
//! strictly negative minimum `ζ*` for a stable queue. Everything downstream
//! only ever sees "the exponent" of the model in the convention of its kind.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::roots::safeguarded_newton;

/// Which one-sided class the driving process belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    #[serde(rename = "sn")]
    SpectrallyNegative,
    #[serde(rename = "sp")]
    SpectrallyPositive,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::SpectrallyNegative => "sn",
            Kind::SpectrallyPositive => "sp",
        }
    }
}

/// Real evaluator `(η, order) -> ψ^{(order)}(η)`.
pub type RealExponentFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;
/// Complex evaluator `(z, order) -> ψ^{(order)}(z)`.
pub type ComplexExponentFn = Arc<dyn Fn(Complex64, usize) -> Complex64 + Send + Sync>;

/// User-supplied exponent. Callables must be re-entrant; they are shared
/// across threads by the grid evaluators.
#[derive(Clone)]
pub struct GenericExponent {
    /// Exponent and its derivatives up to order 4.
    pub eval: RealExponentFn,
    /// Optional analytic continuation, needed for transform inversion and
    /// complex-argument coefficient evaluation.
    pub eval_complex: Option<ComplexExponentFn>,
    /// Open interval on which the exponent is finite.
    pub domain: (f64, f64),
    /// The caller asserts that the right inverse is analytic in a sector
    /// around the branch point. Not verified.
    pub analytic_asserted: bool,
}

impl fmt::Debug for GenericExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericExponent")
            .field("domain", &self.domain)
            .field("has_complex", &self.eval_complex.is_some())
            .field("analytic_asserted", &self.analytic_asserted)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    /// `X(t) = Σ_{i≤N(t)} σ_i − t` with `N` Poisson(`lambda`) and
    /// `σ_i ~ Erlang(shape, nu)`. Spectrally positive only.
    CompoundPoissonErlang {
        lambda: f64,
        shape: u32,
        nu: f64,
    },
    /// `X(t) = σ B(t) − c t`.
    LinearBrownian {
        sigma: f64,
        c: f64,
    },
    Generic(GenericExponent),
}

#[derive(Debug, Clone)]
pub struct LevyModel {
    pub kind: Kind,
    pub family: Family,
}

impl LevyModel {
    /// M/E(k,ν)/1 netput with unit service rate.
    pub fn cp_erlang(lambda: f64, shape: u32, nu: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(QsdError::InvalidModel(format!("lambda must be > 0, got {lambda}")));
        }
        if shape == 0 {
            return Err(QsdError::InvalidModel("Erlang shape must be >= 1".into()));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(QsdError::InvalidModel(format!("nu must be > 0, got {nu}")));
        }
        Ok(Self {
            kind: Kind::SpectrallyPositive,
            family: Family::CompoundPoissonErlang { lambda, shape, nu },
        })
    }

    pub fn brownian(kind: Kind, sigma: f64, c: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(QsdError::InvalidModel(format!("sigma must be > 0, got {sigma}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(QsdError::InvalidModel(format!("c must be > 0, got {c}")));
        }
        Ok(Self {
            kind,
            family: Family::LinearBrownian { sigma, c },
        })
    }

    pub fn generic(kind: Kind, exponent: GenericExponent) -> Result<Self> {
        let (lo, hi) = exponent.domain;
        if !(lo < 0.0 && hi > 0.0) {
            return Err(QsdError::InvalidModel(
                "generic exponent domain must contain the origin".into(),
            ));
        }
        Ok(Self {
            kind,
            family: Family::Generic(exponent),
        })
    }

    /// Open interval on which the exponent is finite.
    pub fn domain(&self) -> (f64, f64) {
        match &self.family {
            Family::CompoundPoissonErlang { nu, .. } => (-nu, f64::INFINITY),
            Family::LinearBrownian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Generic(g) => g.domain,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self.family, Family::Generic(_))
    }

    /// Traffic intensity of the Erlang family, `λ k / ν`.
    pub fn load(&self) -> Option<f64> {
        match self.family {
            Family::CompoundPoissonErlang { lambda, shape, nu } => Some(lambda * shape as f64 / nu),
            _ => None,
        }
    }

    /// `E X(1)` of the netput process.
    pub fn netput_drift(&self) -> Result<f64> {
        let d = self.psi(0.0, 1)?;
        Ok(match self.kind {
            Kind::SpectrallyNegative => d,
            Kind::SpectrallyPositive => -d,
        })
    }

    fn check_domain(&self, eta: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if eta > lo && eta < hi && eta.is_finite() {
            Ok(())
        } else {
            Err(QsdError::Domain { value: eta, lo, hi })
        }
    }

    /// The `order`-th derivative of the exponent at `eta`.
    pub fn psi(&self, eta: f64, order: usize) -> Result<f64> {
        if order > 4 {
            return Err(QsdError::UnsupportedOrder(order));
        }
        self.check_domain(eta)?;
        Ok(match &self.family {
            Family::CompoundPoissonErlang { lambda, shape, nu } => erlang_exponent(*lambda, *shape, *nu, eta, order),
            &Family::LinearBrownian { sigma, c } => {
                // SP: cη + σ²η²/2, SN: σ²η²/2 − cη
                let c = match self.kind {
                    Kind::SpectrallyPositive => c,
                    Kind::SpectrallyNegative => -c,
                };
                let s2 = sigma * sigma;
                match order {
                    0 => c * eta + 0.5 * s2 * eta * eta,
                    1 => c + s2 * eta,
                    2 => s2,
                    _ => 0.0,
                }
            }
            Family::Generic(g) => (g.eval)(eta, order),
        })
    }

    /// Analytic continuation of [`LevyModel::psi`].
    pub fn psi_complex(&self, z: Complex64, order: usize) -> Result<Complex64> {
        if order > 4 {
            return Err(QsdError::UnsupportedOrder(order));
        }
        let (lo, hi) = self.domain();
        if !(z.re > lo && z.re < hi && z.is_finite()) {
            return Err(QsdError::Domain { value: z.re, lo, hi });
        }
        Ok(match &self.family {
            Family::CompoundPoissonErlang { lambda, shape, nu } => {
                erlang_exponent(Complex64::from(*lambda), *shape, Complex64::from(*nu), z, order)
            }
            &Family::LinearBrownian { sigma, c } => {
                let c = match self.kind {
                    Kind::SpectrallyPositive => c,
                    Kind::SpectrallyNegative => -c,
                };
                let s2 = sigma * sigma;
                match order {
                    0 => c * z + 0.5 * s2 * z * z,
                    1 => c + s2 * z,
                    2 => Complex64::from(s2),
                    _ => Complex64::from(0.0),
                }
            }
            Family::Generic(g) => match &g.eval_complex {
                Some(f) => f(z, order),
                None => {
                    return Err(QsdError::Unsupported(
                        "generic exponent has no complex evaluator".into(),
                    ))
                }
            },
        })
    }
}

/// `η − λ + λ (ν/(η+ν))^k` and its derivatives, generic over real/complex.
fn erlang_exponent<T>(lambda: T, shape: u32, nu: T, eta: T, order: usize) -> T
where
    T: num_complex::ComplexFloat + From<f64>,
{
    let k = shape as i32;
    let shifted = eta + nu;
    let w = (nu / shifted).powi(k);
    // j-th derivative of λ w^k: λ (−1)^j k(k+1)…(k+j−1) w^k / (η+ν)^j
    let mut rising = 1.0;
    for i in 0..order {
        rising *= (shape as usize + i) as f64;
    }
    let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
    let jump = lambda * w * <T as From<f64>>::from(sign * rising) / shifted.powi(order as i32);
    match order {
        0 => eta - lambda + jump,
        1 => <T as From<f64>>::from(1.0) + jump,
        _ => jump,
    }
}

/// The minimiser of the exponent and derivative data there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalData {
    pub theta_star: f64,
    pub zeta_star: f64,
    pub psi_dd: f64,
    pub psi_d3: f64,
    pub psi_d4: f64,
}

/// Maximum number of step doublings in the bracket search for `ϑ*`.
const MAX_DOUBLINGS: usize = 60;

/// Locates `ϑ*` (root of `ψ'`) and `ζ* = ψ(ϑ*)`.
pub fn critical_point(model: &LevyModel) -> Result<CriticalData> {
    let slope0 = model.psi(0.0, 1)?;
    let stable = match model.kind {
        Kind::SpectrallyNegative => slope0 < 0.0,
        Kind::SpectrallyPositive => slope0 > 0.0,
    };
    if !stable {
        return Err(QsdError::Unstable(format!("exponent slope at the origin is {slope0}")));
    }
    // walk in the direction in which ψ decreases until ψ' changes sign
    let dir = -slope0.signum();
    let (lo_dom, hi_dom) = model.domain();
    let boundary = if dir > 0.0 { hi_dom } else { lo_dom };

    let mut prev = 0.0;
    let mut step = 1e-3;
    let mut found = None;
    for _ in 0..=MAX_DOUBLINGS {
        let mut x = prev + dir * step;
        if (dir > 0.0 && x >= boundary) || (dir < 0.0 && x <= boundary) {
            x = 0.5 * (prev + boundary);
        }
        let d = model.psi(x, 1)?;
        if !d.is_finite() {
            break;
        }
        if d * dir >= 0.0 {
            found = Some((prev, x));
            break;
        }
        prev = x;
        step *= 2.0;
    }
    let (a, b) = found.ok_or(QsdError::NoInteriorMinimum)?;

    let theta_star = {
        let tol = |x: f64| -> Result<f64> { Ok(1e-13 * model.psi(x, 2)?.abs().max(1.0)) };
        let f_tol = tol(0.5 * (a + b))?.min(tol(a)?).min(tol(b)?);
        safeguarded_newton(|x| Ok((model.psi(x, 1)?, model.psi(x, 2)?)), a, b, 0.5 * (a + b), f_tol)?
    };
    let zeta_star = model.psi(theta_star, 0)?;
    let psi_dd = model.psi(theta_star, 2)?;
    if !(psi_dd > 0.0) {
        return Err(QsdError::NoInteriorMinimum);
    }
    if !(zeta_star < 0.0) {
        return Err(QsdError::NotStrictlyNegative(zeta_star));
    }
    Ok(CriticalData {
        theta_star,
        zeta_star,
        psi_dd,
        psi_d3: model.psi(theta_star, 3)?,
        psi_d4: model.psi(theta_star, 4)?,
    })
}

/// Right inverse `Φ(s)`: the root `η ≥ ϑ*` of `ψ(η) = s`.
pub fn phi_right_inverse(model: &LevyModel, s: f64) -> Result<f64> {
    let crit = critical_point(model)?;
    phi_with(model, &crit, s)
}

/// [`phi_right_inverse`] with precomputed critical data.
pub fn phi_with(model: &LevyModel, crit: &CriticalData, s: f64) -> Result<f64> {
    if !(s >= crit.zeta_star) {
        return Err(QsdError::BelowBranchPoint {
            s,
            zeta_star: crit.zeta_star,
        });
    }
    if s == crit.zeta_star {
        return Ok(crit.theta_star);
    }
    if let Family::LinearBrownian { sigma, c } = model.family {
        return Ok(brownian_phi(model.kind, sigma, c, s));
    }
    phi_numeric(model, crit, s)
}

/// Root finder behind [`phi_with`], also used for Brownian models in tests.
pub fn phi_numeric(model: &LevyModel, crit: &CriticalData, s: f64) -> Result<f64> {
    let ts = crit.theta_star;
    let gap = s - crit.zeta_star;
    // square-root behaviour near the branch point
    let guess = ts + (2.0 * gap / crit.psi_dd).sqrt();

    let (_, hi_dom) = model.domain();
    let mut hi = guess.max(ts + 1e-300);
    let mut width = (hi - ts).max(1e-8);
    let mut bracketed = false;
    for _ in 0..=MAX_DOUBLINGS * 2 {
        if hi >= hi_dom {
            hi = 0.5 * (ts + hi_dom).max(ts + 0.5 * width);
        }
        if model.psi(hi, 0)? >= s {
            bracketed = true;
            break;
        }
        width *= 2.0;
        hi = ts + width;
    }
    if !bracketed {
        return Err(QsdError::ConvergenceFailure(format!(
            "could not bracket the right inverse at s = {s}"
        )));
    }
    let f_tol = 1e-13 * s.abs().max(1.0);
    let x0 = if guess > ts && guess < hi {
        guess
    } else {
        0.5 * (ts + hi)
    };
    safeguarded_newton(|x| Ok((model.psi(x, 0)? - s, model.psi(x, 1)?)), ts, hi, x0, f_tol)
}

fn brownian_phi<T>(kind: Kind, sigma: f64, c: f64, s: T) -> T
where
    T: num_complex::ComplexFloat<Real = f64> + From<f64>,
{
    let lift = <T as From<f64>>::from;
    let s2 = sigma * sigma;
    let root = (lift(c * c) + s * lift(2.0 * s2)).sqrt();
    match kind {
        // increasing branch of cη + σ²η²/2 = s, written without cancellation
        Kind::SpectrallyPositive => s * lift(2.0) / (root + lift(c)),
        Kind::SpectrallyNegative => (root + lift(c)) / lift(s2),
    }
}

/// Analytic continuation of `Φ` to complex arguments.
///
/// Follows the increasing real branch off the real axis by Newton
/// continuation with step halving. Successive calls continue from the last
/// accepted point, so callers walking along a contour pay for short steps
/// only.
#[derive(Debug, Clone)]
pub struct PhiTracker<'a> {
    model: &'a LevyModel,
    crit: CriticalData,
    last: Option<(Complex64, Complex64)>,
}

impl<'a> PhiTracker<'a> {
    pub fn new(model: &'a LevyModel, crit: CriticalData) -> Self {
        Self {
            model,
            crit,
            last: None,
        }
    }

    pub fn eval(&mut self, s: Complex64) -> Result<Complex64> {
        if s.im == 0.0 {
            let w = Complex64::from(phi_with(self.model, &self.crit, s.re)?);
            self.last = Some((s, w));
            return Ok(w);
        }
        if let Family::LinearBrownian { sigma, c } = self.model.family {
            return Ok(brownian_phi(self.model.kind, sigma, c, s));
        }
        let start = match self.last {
            Some(p) => p,
            None => {
                if !(s.re > self.crit.zeta_star) {
                    return Err(QsdError::BelowBranchPoint {
                        s: s.re,
                        zeta_star: self.crit.zeta_star,
                    });
                }
                let r = Complex64::from(s.re);
                (r, Complex64::from(phi_with(self.model, &self.crit, s.re)?))
            }
        };
        let w = self.continue_from(start, s)?;
        self.last = Some((s, w));
        Ok(w)
    }

    fn continue_from(&self, start: (Complex64, Complex64), target: Complex64) -> Result<Complex64> {
        let (mut s0, mut w0) = start;
        let mut frac = 1.0_f64;
        let scale = target.norm().max(1.0);
        while s0 != target {
            let s1 = if frac >= 1.0 { target } else { s0 + (target - s0) * frac };
            match self.newton_step(s0, w0, s1) {
                Some(w1) => {
                    s0 = s1;
                    w0 = w1;
                    frac = (frac * 2.0).min(1.0);
                }
                None => {
                    frac *= 0.5;
                    if frac < 1e-14 {
                        return Err(QsdError::ConvergenceFailure(format!(
                            "complex right-inverse continuation stalled near {s0}"
                        )));
                    }
                }
            }
            if (s0 - target).norm() <= 1e-15 * scale {
                s0 = target;
            }
        }
        Ok(w0)
    }

    fn newton_step(&self, s0: Complex64, w0: Complex64, s1: Complex64) -> Option<Complex64> {
        let d0 = self.model.psi_complex(w0, 1).ok()?;
        let pred = w0 + (s1 - s0) / d0;
        let mut w = pred;
        let tol = 1e-14 * s1.norm().max(1.0);
        for _ in 0..12 {
            let f = self.model.psi_complex(w, 0).ok()? - s1;
            let d = self.model.psi_complex(w, 1).ok()?;
            let dw = f / d;
            w -= dw;
            if !w.is_finite() {
                return None;
            }
            if f.norm() <= tol || dw.norm() <= 1e-15 * w.norm().max(1.0) {
                // a corrector that moves far from the predictor signals a branch jump
                let drift = (w - pred).norm();
                let step = (pred - w0).norm();
                if drift <= 0.3 * step + 1e-12 * w.norm().max(1.0) {
                    return Some(w);
                }
                return None;
            }
        }
        None
    }
}

/// Outcome of the (SN)/(SP) checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub stable: bool,
    pub exponent_finite_on_window: bool,
    pub interior_minimum: bool,
    pub minimum_negative: bool,
    pub analyticity_documented: bool,
    pub messages: Vec<String>,
}

impl AssumptionReport {
    pub fn certified(&self) -> bool {
        self.stable
            && self.exponent_finite_on_window
            && self.interior_minimum
            && self.minimum_negative
            && self.analyticity_documented
    }
}

/// Runs every check and records findings instead of failing.
pub fn check_assumptions(model: &LevyModel) -> AssumptionReport {
    let mut messages = Vec::new();
    let mut report = AssumptionReport {
        stable: false,
        exponent_finite_on_window: false,
        interior_minimum: false,
        minimum_negative: false,
        analyticity_documented: false,
        messages: Vec::new(),
    };

    match model.netput_drift() {
        Ok(drift) => {
            report.stable = drift < 0.0;
            if let Some(rho) = model.load() {
                report.stable &= rho < 1.0;
                messages.push(format!("traffic intensity rho = {rho}"));
            }
            messages.push(format!("netput drift E X(1) = {drift}"));
        }
        Err(e) => messages.push(format!("drift evaluation failed: {e}")),
    }

    report.analyticity_documented = match &model.family {
        Family::CompoundPoissonErlang { .. } => {
            messages.push("Erlang jump density is semiexponential; analyticity holds".into());
            true
        }
        Family::LinearBrownian { .. } => {
            messages.push("linear Brownian motion: analyticity holds".into());
            true
        }
        Family::Generic(g) => {
            messages.push(if g.analytic_asserted {
                "analyticity asserted by the caller (not verified)".into()
            } else {
                "analyticity not asserted for the generic exponent".into()
            });
            g.analytic_asserted
        }
    };

    if !report.stable {
        messages.push("queue is not stable; critical point not computed".into());
        report.messages = messages;
        return report;
    }

    match critical_point(model) {
        Ok(crit) => {
            let ts = crit.theta_star;
            let (lo, hi) = model.domain();
            let inside = ts > lo && ts < hi;
            let right_side = match model.kind {
                Kind::SpectrallyNegative => ts > 0.0,
                Kind::SpectrallyPositive => ts < 0.0,
            };
            report.interior_minimum = inside && right_side && crit.psi_dd > 0.0;
            // finite between the origin and ϑ*, with ϑ* strictly inside
            report.exponent_finite_on_window = inside
                && (0..=16).all(|i| {
                    let x = ts * (i as f64) / 16.0;
                    model.psi(x, 0).map(f64::is_finite).unwrap_or(false)
                });
            report.minimum_negative = crit.zeta_star < 0.0;
            messages.push(format!("theta* = {ts}, zeta* = {}", crit.zeta_star));
        }
        Err(e) => {
            messages.push(format!("critical point search failed: {e}"));
            if let QsdError::NotStrictlyNegative(_) = e {
                report.interior_minimum = true;
                report.exponent_finite_on_window = true;
            }
        }
    }
    report.messages = messages;
    report
}

/// JSON model description consumed by the CLI.
///
/// ```json
/// {"kind": "sp", "family": "cp_erlang", "params": {"lambda": 1, "shape": 2, "nu": 3}}
/// {"kind": "sp", "family": "brownian",  "params": {"sigma": 1, "c": 1}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: Kind,
    pub family: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl ModelSpec {
    fn param(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| QsdError::InvalidModel(format!("missing numeric parameter '{name}'")))
    }

    fn check_params(&self, allowed: &[&str]) -> Result<()> {
        for key in self.params.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(QsdError::InvalidModel(format!("unknown parameter '{key}'")));
            }
        }
        Ok(())
    }

    pub fn to_model(&self) -> Result<LevyModel> {
        match self.family.as_str() {
            "cp_erlang" => {
                self.check_params(&["lambda", "shape", "nu"])?;
                if self.kind != Kind::SpectrallyPositive {
                    return Err(QsdError::InvalidModel(
                        "cp_erlang has upward jumps and must use kind \"sp\"".into(),
                    ));
                }
                let shape = self.param("shape")?;
                if shape.fract() != 0.0 || shape < 1.0 || shape > u32::MAX as f64 {
                    return Err(QsdError::InvalidModel(format!(
                        "shape must be a positive integer, got {shape}"
                    )));
                }
                LevyModel::cp_erlang(self.param("lambda")?, shape as u32, self.param("nu")?)
            }
            "brownian" => {
                self.check_params(&["sigma", "c"])?;
                LevyModel::brownian(self.kind, self.param("sigma")?, self.param("c")?)
            }
            "generic" => Err(QsdError::InvalidModel(
                "generic exponents carry callables and are only available through the library API".into(),
            )),
            other => Err(QsdError::InvalidModel(format!("unknown family '{other}'"))),
        }
    }

    pub fn from_model(model: &LevyModel) -> Option<Self> {
        let mut params = serde_json::Map::new();
        let family = match model.family {
            Family::CompoundPoissonErlang { lambda, shape, nu } => {
                params.insert("lambda".into(), lambda.into());
                params.insert("shape".into(), shape.into());
                params.insert("nu".into(), nu.into());
                "cp_erlang"
            }
            Family::LinearBrownian { sigma, c } => {
                params.insert("sigma".into(), sigma.into());
                params.insert("c".into(), c.into());
                "brownian"
            }
            Family::Generic(_) => return None,
        };
        Some(Self {
            kind: model.kind,
            family: family.into(),
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm_sp() -> LevyModel {
        LevyModel::brownian(Kind::SpectrallyPositive, 1.0, 1.0).unwrap()
    }

    fn me2() -> LevyModel {
        LevyModel::cp_erlang(1.0, 2, 3.0).unwrap()
    }

    #[test]
    fn psi_examples() {
        assert_eq!(bm_sp().psi(2.0, 0).unwrap(), 4.0);
        assert_eq!(me2().psi(0.0, 0).unwrap(), 0.0);
        assert!((me2().psi(0.0, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn psi_errors() {
        assert!(matches!(me2().psi(-3.5, 0), Err(QsdError::Domain { .. })));
        assert!(matches!(me2().psi(0.0, 5), Err(QsdError::UnsupportedOrder(5))));
    }

    #[test]
    fn erlang_closed_form_derivative_matches_spec_formula() {
        // λ(−1)^j (k+j−1)!/(k−1)! ν^k/(η+ν)^{k+j}, j = 2
        let (l, n, eta) = (1.0, 3.0, 0.7_f64);
        let want = l * 6.0 * n * n / (eta + n).powi(4);
        assert!((me2().psi(eta, 2).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn brownian_duality() {
        let sn = LevyModel::brownian(Kind::SpectrallyNegative, 1.3, 0.4).unwrap();
        let sp = LevyModel::brownian(Kind::SpectrallyPositive, 1.3, 0.4).unwrap();
        for &eta in &[-2.0, -0.3, 0.0, 0.8, 3.1] {
            assert_eq!(sn.psi(eta, 0).unwrap(), sp.psi(-eta, 0).unwrap());
        }
    }

    #[test]
    fn brownian_critical_point_is_exact() {
        let c = critical_point(&bm_sp()).unwrap();
        assert_eq!(c.theta_star, -1.0);
        assert_eq!(c.zeta_star, -0.5);
    }

    #[test]
    fn erlang_critical_point() {
        let c = critical_point(&me2()).unwrap();
        let closed = 18f64.cbrt() - 3.0;
        assert!((c.theta_star - closed).abs() < 1e-13);
        assert!((c.theta_star + 0.3792586).abs() < 1e-7);
        assert!((c.zeta_star + 0.0688879).abs() < 1e-7);
        assert!(me2().psi(c.theta_star, 1).unwrap().abs() <= 1e-12 * c.psi_dd.max(1.0));
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_right_inverse(&bm_sp(), 0.0).unwrap(), 0.0);
        assert!((phi_right_inverse(&bm_sp(), 4.0).unwrap() - 2.0).abs() < 1e-15);
        let c = critical_point(&me2()).unwrap();
        assert_eq!(phi_right_inverse(&me2(), c.zeta_star).unwrap(), c.theta_star);
        assert!(matches!(
            phi_right_inverse(&me2(), c.zeta_star - 1e-3),
            Err(QsdError::BelowBranchPoint { .. })
        ));
    }

    #[test]
    fn brownian_phi_closed_form_agrees_with_root_finder() {
        for kind in [Kind::SpectrallyNegative, Kind::SpectrallyPositive] {
            let m = LevyModel::brownian(kind, 0.7, 1.2).unwrap();
            let c = critical_point(&m).unwrap();
            for &gap in &[1e-9, 1e-4, 0.1, 1.0, 10.0, 300.0] {
                let s = c.zeta_star + gap;
                let a = phi_with(&m, &c, s).unwrap();
                let b = phi_numeric(&m, &c, s).unwrap();
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-3), "{kind:?} {gap}: {a} {b}");
            }
        }
    }

    #[test]
    fn assumptions() {
        assert!(check_assumptions(&bm_sp()).certified());
        assert!(check_assumptions(&me2()).certified());
        let r = check_assumptions(&LevyModel::cp_erlang(2.0, 2, 3.0).unwrap());
        assert!(!r.stable);
        assert!(!r.certified());
    }

    #[test]
    fn unstable_model_has_no_critical_point() {
        let m = LevyModel::cp_erlang(2.0, 2, 3.0).unwrap();
        assert!(matches!(critical_point(&m), Err(QsdError::Unstable(_))));
    }

    #[test]
    fn complex_phi_matches_brownian_closed_form() {
        // force the continuation path through a generic wrapper
        let g = GenericExponent {
            eval: Arc::new(|x, k| match k {
                0 => x + 0.5 * x * x,
                1 => 1.0 + x,
                2 => 1.0,
                _ => 0.0,
            }),
            eval_complex: Some(Arc::new(|z, k| match k {
                0 => z + 0.5 * z * z,
                1 => 1.0 + z,
                2 => Complex64::from(1.0),
                _ => Complex64::from(0.0),
            })),
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            analytic_asserted: true,
        };
        let gm = LevyModel::generic(Kind::SpectrallyPositive, g).unwrap();
        let crit = critical_point(&gm).unwrap();
        let mut tr = PhiTracker::new(&gm, crit);
        for k in 0..200 {
            let s = Complex64::new(-0.3, 0.37 * k as f64);
            let w = tr.eval(s).unwrap();
            let want = -1.0 + (1.0 + 2.0 * s).sqrt();
            assert!((w - want).norm() < 1e-12 * want.norm().max(1.0), "{s}: {w} vs {want}");
        }
    }

    #[test]
    fn model_spec_round_trip() {
        let spec: ModelSpec =
            serde_json::from_str(r#"{"kind":"sp","family":"cp_erlang","params":{"lambda":1,"shape":2,"nu":3}}"#)
                .unwrap();
        let m = spec.to_model().unwrap();
        assert_eq!(
            ModelSpec::from_model(&m).unwrap().to_model().unwrap().load(),
            Some(2.0 / 3.0)
        );
        let bad: ModelSpec =
            serde_json::from_str(r#"{"kind":"sn","family":"cp_erlang","params":{"lambda":1,"shape":2,"nu":3}}"#)
                .unwrap();
        assert!(bad.to_model().is_err());
        let generic: ModelSpec = serde_json::from_str(r#"{"kind":"sn","family":"generic","params":{}}"#).unwrap();
        assert!(generic.to_model().is_err());
    }
}
