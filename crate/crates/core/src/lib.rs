//! Numerical pseudo-Finsler geometry on truncated Taylor jets.
//!
//! The jet engine, expression evaluator and quadrature rules are generic
//! over [`Scalar`]; the geometry layers run in [`Real`] (`f64`).

pub mod catalog;
pub mod connections;
pub mod conservation;
pub mod error;
pub mod expr;
pub mod integration;
pub mod jets;
pub mod quadrature;
pub mod report;
pub mod sampling;
pub mod scalar;
pub mod tensors;

pub use error::{GeometryError, Result};
pub use scalar::Scalar;

/// Scalar type of the geometry layers.
pub type Real = f64;
/// Jet over [`Real`].
pub type Jet64 = jets::Jet<Real>;
/// Jet over `f32`.
pub type Jet32 = jets::Jet<f32>;
