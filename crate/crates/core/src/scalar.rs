//! Scalar types the generic numerical kernels run on.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Real scalar usable as a jet coefficient or quadrature weight.
pub trait Scalar: Float + FromPrimitive + Debug + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}
