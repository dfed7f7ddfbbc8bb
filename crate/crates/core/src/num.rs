//! Scalar abstraction shared by the model, fitting and forecasting code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast};

/// Real scalar the HMM machinery is generic over: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + NumCast + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Tolerance used when checking that a probability vector sums to one.
    ///
    /// Never tighter than `1e-12`, and widened for low-precision types.
    fn sum_tolerance() -> Self {
        let floor = Self::lit(1e-12);
        let eps = Self::epsilon() * Self::lit(64.0);
        if eps > floor {
            eps
        } else {
            floor
        }
    }

    /// Converts an `f64` literal into `Self`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `log(sum(exp(xs)))`, safe when every entry is `-inf`.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let sum: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Normalizes log-weights into a probability vector by max subtraction.
///
/// Returns `None` when every entry is `-inf`.
pub fn normalize_log_weights<T: Real>(log_w: &[T]) -> Option<Vec<T>> {
    let max = log_w.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || max.is_nan() {
        return None;
    }
    let raw: Vec<T> = log_w.iter().map(|&x| (x - max).exp()).collect();
    let total: T = raw.iter().copied().sum();
    Some(raw.into_iter().map(|x| x / total).collect())
}
