//! Real/complex abstraction for formulas shared by the analytic and the
//! inversion code paths.

use num_complex::{Complex64, ComplexFloat};

use crate::error::Result;
use crate::exponent::LevyModel;

/// `f64` or `Complex64`, with access to the model's exponent.
pub trait Scalar: ComplexFloat<Real = f64> + From<f64> + std::fmt::Debug {
    fn exponent(model: &LevyModel, x: Self, order: usize) -> Result<Self>;

    /// Embeds a real constant.
    fn lift(x: f64) -> Self {
        <Self as From<f64>>::from(x)
    }

    fn to_complex(self) -> Complex64 {
        Complex64::new(self.re(), self.im())
    }
}

impl Scalar for f64 {
    fn exponent(model: &LevyModel, x: Self, order: usize) -> Result<Self> {
        model.psi(x, order)
    }
}

impl Scalar for Complex64 {
    fn exponent(model: &LevyModel, x: Self, order: usize) -> Result<Self> {
        model.psi_complex(x, order)
    }
}
