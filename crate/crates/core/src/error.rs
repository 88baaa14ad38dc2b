use thiserror::Error;

use crate::expr::{EvalError, ParseError};
use crate::jets::JetError;

/// Failures of pointwise geometry, quadrature and verification runs.
#[derive(Debug, Clone, Error)]
pub enum GeometryError {
    #[error("point x = {x:?}, y = {y:?} is not admissible: {reason}")]
    Inadmissible { x: Vec<f64>, y: Vec<f64>, reason: String },
    #[error("metric is degenerate (|det g| / product of row norms = {ratio:e})")]
    Degenerate { ratio: f64 },
    #[error("metric signature {found:?} differs from the declared {expected:?}")]
    SignatureMismatch { expected: Vec<i8>, found: Vec<i8> },
    #[error("{what} needs a jet context of order {needed}, this one has order {have}")]
    OrderTooLow {
        what: &'static str,
        needed: usize,
        have: usize,
    },
    #[error("Legendre inversion stalled after {iterations} iterations (residual {residual:e}, last iterate {last:?})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },
    #[error("Legendre iterate left the seed's cone component (last iterate {last:?})")]
    LeftCone { last: Vec<f64> },
    #[error("transverse vector is tangent to the face (g_n(n, X) = {value:e})")]
    NotTransverse { value: f64 },
    #[error("applicability gate refused: {0}")]
    GateRefused(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Jet(#[from] JetError),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;
