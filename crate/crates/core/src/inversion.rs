//! Euler-summation Bromwich inversion (Abate–Whitt).
//!
//! For a transform `F(s) = ∫₀^∞ e^{−st} f(t) dt` analytic for `Re s > 0`,
//!
//! `f(t) ≈ e^{A/2}/(2t) · Σ_{k∈ℤ} (−1)^k F((A + 2kπi)/(2t))`,
//!
//! with discretisation error of order `e^{−A}`. The alternating series is
//! summed with `n` plain terms followed by binomial (Euler) averaging of the
//! next `m` partial sums.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{QsdError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerParams {
    /// Contour parameter; the line sits at `Re s = A/(2t)`.
    pub a: f64,
    pub n: usize,
    pub m: usize,
}

impl EulerParams {
    /// Split `terms` transform evaluations into `m = 11` Euler terms and the rest.
    pub fn from_terms(a: f64, terms: usize) -> Result<Self> {
        if terms < 21 || terms.is_multiple_of(2) {
            return Err(QsdError::InvalidConfig(format!(
                "inversion terms must be odd and at least 21, got {terms}"
            )));
        }
        if !(a > 0.0) {
            return Err(QsdError::InvalidConfig(format!(
                "contour parameter must be positive, got {a}"
            )));
        }
        let m = 11;
        Ok(Self { a, n: terms - m - 1, m })
    }

    fn nodes(&self, t: f64) -> impl Iterator<Item = Complex64> + '_ {
        let inv = 1.0 / (2.0 * t);
        (0..=self.n + self.m).map(move |k| Complex64::new(self.a * inv, 2.0 * PI * k as f64 * inv))
    }
}

/// An inverted value and the change between the last two Euler averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverted<T> {
    pub value: T,
    pub tail_estimate: f64,
}

fn euler_average<T>(partial: &[T], n: usize, m: usize) -> (T, T)
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    // binomial weights 2^{-m} C(m, j)
    let mut w = vec![1.0_f64; m + 1];
    for j in 1..=m {
        w[j] = w[j - 1] * (m - j + 1) as f64 / j as f64;
    }
    let scale = 0.5_f64.powi(m as i32);
    let avg = |start: usize| {
        let mut acc = T::default();
        for (j, wj) in w.iter().enumerate() {
            acc = acc + partial[start + j] * (wj * scale);
        }
        acc
    };
    (avg(n), avg(n - 1))
}

/// Inverts a transform of a real function, using `F(s̄) = conj F(s)`.
///
/// `f` is evaluated at the contour nodes in order of increasing imaginary
/// part, which suits continuation-based evaluators.
pub fn invert_real<F>(mut f: F, t: f64, p: &EulerParams) -> Result<Inverted<f64>>
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    check_time(t)?;
    let mut partial = Vec::with_capacity(p.n + p.m + 1);
    let mut sum = 0.0;
    for (k, s) in p.nodes(t).enumerate() {
        let v = f(s)?.re;
        let term = if k == 0 {
            0.5 * v
        } else if k % 2 == 1 {
            -v
        } else {
            v
        };
        sum += term;
        partial.push(sum);
    }
    let (hi, lo) = euler_average(&partial, p.n, p.m);
    let pre = (0.5 * p.a).exp() / t;
    finish(pre * hi, pre * (hi - lo).abs())
}

/// Inverts a transform whose original is complex valued (no conjugate
/// symmetry), pairing the nodes `k` and `−k`.
pub fn invert_complex<F>(mut f: F, t: f64, p: &EulerParams) -> Result<Inverted<Complex64>>
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    check_time(t)?;
    let mut partial = Vec::with_capacity(p.n + p.m + 1);
    let mut sum = Complex64::new(0.0, 0.0);
    for (k, s) in p.nodes(t).enumerate() {
        let v = if k == 0 { f(s)? } else { f(s)? + f(s.conj())? };
        sum += if k % 2 == 1 { -v } else { v };
        partial.push(sum);
    }
    let (hi, lo) = euler_average(&partial, p.n, p.m);
    let pre = (0.5 * p.a).exp() / (2.0 * t);
    let value = hi * pre;
    if !value.is_finite() {
        return Err(QsdError::ConvergenceFailure(format!(
            "non-finite inversion result at t = {t}"
        )));
    }
    Ok(Inverted {
        value,
        tail_estimate: pre * (hi - lo).norm(),
    })
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(QsdError::InvalidConfig(format!(
            "inversion time must be positive, got {t}"
        )))
    }
}

fn finish(value: f64, tail_estimate: f64) -> Result<Inverted<f64>> {
    if !value.is_finite() {
        return Err(QsdError::ConvergenceFailure("non-finite inversion result".into()));
    }
    Ok(Inverted { value, tail_estimate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EulerParams {
        EulerParams::from_terms(18.4, 41).unwrap()
    }

    #[test]
    fn rejects_bad_term_counts() {
        assert!(EulerParams::from_terms(18.4, 40).is_err());
        assert!(EulerParams::from_terms(18.4, 19).is_err());
        assert_eq!(params().n, 29);
    }

    #[test]
    fn exponential() {
        for t in [0.1, 1.0, 5.0, 20.0] {
            let r = invert_real(|s| Ok(1.0 / (s + 1.0)), t, &params()).unwrap();
            assert!((r.value - (-t).exp()).abs() < 1e-8, "{t}: {}", r.value);
        }
    }

    #[test]
    fn gamma_density() {
        // x e^{-x}
        let r = invert_real(|s| Ok(1.0 / ((s + 1.0) * (s + 1.0))), 2.0, &params()).unwrap();
        assert!((r.value - 2.0 * (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn branch_point_transform() {
        // 1/sqrt(s) ↔ 1/sqrt(πt)
        let t = 3.0;
        let r = invert_real(|s| Ok(1.0 / s.sqrt()), t, &params()).unwrap();
        let exact = 1.0 / (PI * t).sqrt();
        assert!((r.value - exact).abs() < 1e-7 * exact);
    }

    #[test]
    fn complex_original() {
        // e^{-(1+i)t} ↔ 1/(s + 1 + i)
        let t = 1.5;
        let r = invert_complex(|s| Ok(1.0 / (s + Complex64::new(1.0, 1.0))), t, &params()).unwrap();
        let exact = (-Complex64::new(1.0, 1.0) * t).exp();
        assert!((r.value - exact).norm() < 1e-8);
    }
}
