//! Bracketed root finding.

use crate::error::{QsdError, Result};

/// Safeguarded Newton iteration on a sign-changing bracket.
///
/// `f` returns `(f(x), f'(x))`. The bracket `[lo, hi]` must satisfy
/// `f(lo) * f(hi) <= 0`. A Newton step that leaves the current bracket or
/// fails to halve the residual is replaced by a bisection step. Iteration
/// stops once `|f(x)| <= f_tol` or the bracket has collapsed to a few ulps.
pub fn safeguarded_newton<F>(mut f: F, lo: f64, hi: f64, x0: f64, f_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let (fa, _) = f(a)?;
    let (fb, _) = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(QsdError::ConvergenceFailure(format!(
            "bracket [{a}, {b}] does not enclose a sign change"
        )));
    }
    let rising = fb > 0.0;

    let mut x = if x0 > a && x0 < b { x0 } else { 0.5 * (a + b) };
    let mut last_abs = f64::INFINITY;
    for _ in 0..500 {
        let (fx, dfx) = f(x)?;
        if fx.abs() <= f_tol {
            return Ok(x);
        }
        // shrink the bracket around the root
        if (fx > 0.0) == rising {
            b = x;
        } else {
            a = x;
        }
        if b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        let newton = x - fx / dfx;
        let stalled = fx.abs() > 0.5 * last_abs;
        last_abs = fx.abs();
        x = if dfx != 0.0 && newton.is_finite() && newton > a && newton < b && !stalled {
            newton
        } else {
            0.5 * (a + b)
        };
    }
    Err(QsdError::ConvergenceFailure(
        "safeguarded Newton exceeded 500 iterations".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cube_root() {
        let r = safeguarded_newton(|x| Ok((x * x * x - 2.0, 3.0 * x * x)), 0.0, 2.0, 1.0, 1e-15).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn falls_back_to_bisection_on_flat_start() {
        // derivative vanishes at the starting point
        let r = safeguarded_newton(|x| Ok((x * x - 0.25, 2.0 * x)), 0.0, 1.0, 0.0, 1e-14).unwrap();
        assert!((r - 0.5).abs() < 1e-13);
    }

    #[test]
    fn rejects_bracket_without_sign_change() {
        let e = safeguarded_newton(|x| Ok((x * x + 1.0, 2.0 * x)), -1.0, 1.0, 0.0, 1e-12);
        assert!(matches!(e, Err(QsdError::ConvergenceFailure(_))));
    }
}
