//! Quasi-stationary distributions of Lévy-driven fluid queues and the
//! `1/t` rate at which the conditioned workload approaches them.
//!
//! The crate is organised bottom-up:
//!
//! * [`exponent`]: models, Laplace exponents, the critical pair `(ϑ*, ζ*)`
//!   and the right inverse `Φ`.
//! * [`expansion`]: square-root expansion of `Φ` at the branch point, the
//!   joint-transform coefficients `C₀…C₃`, and the transforms `μ̃`, `ξ̃`.
//! * [`transform`]: the double transform `L(ϑ; α, β)`, its numerical
//!   inversion in time, the Tauberian tail and convergence-rate profiles.
//! * [`qsim`]: Monte Carlo of the stationary workload conditioned on a long
//!   busy period, with exponential tilting.
//! * [`verify`]: the end-to-end oracle suite run by `qsd verify` and the
//!   acceptance tests.

// NaN must fail range checks, hence the many `!(x > 0.0)` guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expansion;
pub mod exponent;
pub mod inversion;
pub mod qsim;
pub mod quadrature;
pub mod roots;
pub mod scalar;
pub mod transform;
pub mod verify;

pub use error::{QsdError, Result};
pub use expansion::{Analysis, JointExpansion, SeriesConstants};
pub use exponent::{
    check_assumptions, critical_point, phi_right_inverse, AssumptionReport, CriticalData, Family, GenericExponent,
    Kind, LevyModel, ModelSpec,
};
pub use scalar::Scalar;
