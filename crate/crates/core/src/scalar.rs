//! Scalar abstraction for the dense linear-algebra kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the kernels in [`crate::linalg`] are generic over.
///
/// The training pipeline uses `f64` only (via [`crate::Real`]); `f32` is
/// supported for callers that accept the looser residual tolerance.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Relative residual bound enforced by
    /// [`crate::linalg::NormalEquations::solve_regularized`].
    fn residual_tol() -> Self;
}

impl Scalar for f64 {
    fn residual_tol() -> Self {
        1e-8
    }
}

impl Scalar for f32 {
    fn residual_tol() -> Self {
        1e-4
    }
}
