//! Scalar abstraction for the exact-MDP layer.

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the MDP solvers are generic over: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + NumAssign + std::fmt::Debug + 'static {
    /// Lossy conversion from `f64`, for constants and tolerances.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
