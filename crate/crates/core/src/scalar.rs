use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used by the exact recursions: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; every `f64` maps to some `f32`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite or infinite float converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Checks that `p` is a probability.
pub(crate) fn is_probability<T: Real>(p: T) -> bool {
    p >= T::zero() && p <= T::one()
}
