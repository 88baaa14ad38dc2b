//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores the Taylor coefficients (partial derivative divided by
//! the multi-index factorial) of a scalar function around a point, for every
//! multi-index of total degree up to the jet order. Coefficients are kept
//! densely in graded order, so a jet of order `k` is a prefix of the same
//! function's jet of any higher order. Products and compositions silently
//! drop terms above the order.

use std::collections::HashMap;
use std::fmt;
use std::sync::{OnceLock, RwLock};

use thiserror::Error;

use crate::scalar::Scalar;

pub mod linalg;

/// Highest supported total derivative order.
pub const MAX_ORDER: usize = 4;
/// Highest supported number of active variables.
pub const MAX_VARS: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("jet order {0} is outside 0..={MAX_ORDER}")]
    OrderOutOfRange(usize),
    #[error("jet dimension {0} exceeds {MAX_VARS}")]
    DimOutOfRange(usize),
    #[error("jets of dimension {0} and {1} cannot be combined")]
    DimMismatch(usize, usize),
    #[error("variable {var} out of range for a {dim}-variable jet")]
    VariableOutOfRange { var: usize, dim: usize },
    #[error("active index {0} repeated or outside the point")]
    BadActiveSet(usize),
    #[error("multi-index {index:?} exceeds jet order {order}")]
    DegreeExceedsOrder { index: Vec<usize>, order: usize },
    #[error("cannot differentiate an order-0 jet")]
    NothingToDifferentiate,
    #[error("{op}: {reason}")]
    Domain { op: &'static str, reason: String },
    #[error("{op} expects {expected} argument(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("jet matrix is singular at the expansion point")]
    Singular,
}

fn domain(op: &'static str, reason: impl Into<String>) -> JetError {
    JetError::Domain {
        op,
        reason: reason.into(),
    }
}

/// Monomial bookkeeping shared by every jet of a given dimension.
pub struct Layout {
    dim: usize,
    exps: Vec<u8>,
    degree_start: [usize; MAX_ORDER + 2],
    index: HashMap<Vec<u8>, usize>,
    // (lhs, rhs, out) sorted by degree of `out`
    products: Vec<(u32, u32, u32)>,
    product_end: [usize; MAX_ORDER + 1],
    // per variable: (src, dst, factor) sorted by degree of `src`
    derivs: Vec<Vec<(u32, u32, u8)>>,
    deriv_end: Vec<[usize; MAX_ORDER + 1]>,
    factorials: Vec<f64>,
}

impl fmt::Debug for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Layout")
            .field("dim", &self.dim)
            .field("monomials", &self.len(MAX_ORDER))
            .finish()
    }
}

fn compositions(dim: usize, degree: usize, prefix: &mut Vec<u8>, out: &mut Vec<u8>) {
    if prefix.len() + 1 == dim {
        prefix.push(degree as u8);
        out.extend_from_slice(prefix);
        prefix.pop();
        return;
    }
    for first in (0..=degree).rev() {
        prefix.push(first as u8);
        compositions(dim, degree - first, prefix, out);
        prefix.pop();
    }
}

impl Layout {
    fn build(dim: usize) -> Layout {
        let mut exps = Vec::new();
        let mut degree_start = [0usize; MAX_ORDER + 2];
        let mut count = 0usize;
        for d in 0..=MAX_ORDER {
            degree_start[d] = count;
            if dim == 0 {
                if d == 0 {
                    count += 1;
                }
                continue;
            }
            let before = exps.len();
            compositions(dim, d, &mut Vec::with_capacity(dim), &mut exps);
            count += (exps.len() - before) / dim;
        }
        degree_start[MAX_ORDER + 1] = count;

        let mono = |i: usize| -> &[u8] { &exps[i * dim..(i + 1) * dim] };
        let degree = |i: usize| -> usize { (0..=MAX_ORDER).rev().find(|&d| degree_start[d] <= i).unwrap_or(0) };

        let mut index = HashMap::with_capacity(count);
        for i in 0..count {
            index.insert(mono(i).to_vec(), i);
        }

        let mut products = Vec::new();
        for i in 0..count {
            for j in 0..count {
                if degree(i) + degree(j) > MAX_ORDER {
                    continue;
                }
                let sum: Vec<u8> = mono(i).iter().zip(mono(j)).map(|(a, b)| a + b).collect();
                products.push((i as u32, j as u32, index[&sum] as u32));
            }
        }
        products.sort_by_key(|&(_, _, k)| k);
        let mut product_end = [0usize; MAX_ORDER + 1];
        for (d, end) in product_end.iter_mut().enumerate() {
            *end = products
                .iter()
                .take_while(|&&(_, _, k)| (k as usize) < degree_start[d + 1])
                .count();
        }

        let mut derivs = Vec::with_capacity(dim);
        let mut deriv_end = Vec::with_capacity(dim);
        for var in 0..dim {
            let mut table = Vec::new();
            for src in 0..count {
                let m = mono(src);
                if m[var] == 0 {
                    continue;
                }
                let mut lowered = m.to_vec();
                lowered[var] -= 1;
                table.push((src as u32, index[&lowered] as u32, m[var]));
            }
            let mut ends = [0usize; MAX_ORDER + 1];
            for (d, end) in ends.iter_mut().enumerate() {
                *end = table
                    .iter()
                    .take_while(|&&(s, _, _)| (s as usize) < degree_start[d + 1])
                    .count();
            }
            derivs.push(table);
            deriv_end.push(ends);
        }

        let factorials = (0..count)
            .map(|i| {
                mono(i)
                    .iter()
                    .map(|&e| (1..=e as u32).product::<u32>() as f64)
                    .product()
            })
            .collect();

        Layout {
            dim,
            exps,
            degree_start,
            index,
            products,
            product_end,
            derivs,
            deriv_end,
            factorials,
        }
    }

    /// Interned layout for `dim` variables.
    pub fn get(dim: usize) -> Result<&'static Layout, JetError> {
        if dim > MAX_VARS {
            return Err(JetError::DimOutOfRange(dim));
        }
        static CACHE: OnceLock<RwLock<HashMap<usize, &'static Layout>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
        if let Some(layout) = cache.read().expect("layout cache poisoned").get(&dim) {
            return Ok(layout);
        }
        let mut write = cache.write().expect("layout cache poisoned");
        let layout = *write
            .entry(dim)
            .or_insert_with(|| Box::leak(Box::new(Layout::build(dim))));
        Ok(layout)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of monomials of total degree `<= order`.
    pub fn len(&self, order: usize) -> usize {
        self.degree_start[order + 1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn exponents(&self, i: usize) -> &[u8] {
        &self.exps[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rank_of(&self, multi_index: &[u8]) -> Option<usize> {
        if self.dim == 0 {
            return multi_index.iter().all(|&e| e == 0).then_some(0);
        }
        self.index.get(multi_index).copied()
    }
}

/// Truncated Taylor expansion of a scalar function of `dim` variables.
#[derive(Clone)]
pub struct Jet<T> {
    layout: &'static Layout,
    order: usize,
    coeffs: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Jet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("dim", &self.layout.dim)
            .field("order", &self.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

fn check_order(order: usize) -> Result<(), JetError> {
    if order > MAX_ORDER {
        Err(JetError::OrderOutOfRange(order))
    } else {
        Ok(())
    }
}

fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 constant representable in scalar type")
}

/// One jet per coordinate of `point`; coordinates listed in `active` become
/// the jet variables (in the listed order), the rest are constants.
pub fn seed_variables<T: Scalar>(point: &[T], active: &[usize], order: usize) -> Result<Vec<Jet<T>>, JetError> {
    check_order(order)?;
    let layout = Layout::get(active.len())?;
    let mut var_of = vec![None; point.len()];
    for (var, &i) in active.iter().enumerate() {
        if i >= point.len() || var_of[i].is_some() {
            return Err(JetError::BadActiveSet(i));
        }
        var_of[i] = Some(var);
    }
    Ok(point
        .iter()
        .zip(var_of)
        .map(|(&value, var)| {
            let mut jet = Jet::from_layout(layout, order, value);
            if let Some(var) = var {
                if order >= 1 {
                    jet.coeffs[1 + var] = T::one();
                }
            }
            jet
        })
        .collect())
}

impl<T: Scalar> Jet<T> {
    fn from_layout(layout: &'static Layout, order: usize, value: T) -> Jet<T> {
        let mut coeffs = vec![T::zero(); layout.len(order)];
        coeffs[0] = value;
        Jet { layout, order, coeffs }
    }

    pub fn constant(dim: usize, order: usize, value: T) -> Result<Jet<T>, JetError> {
        check_order(order)?;
        Ok(Jet::from_layout(Layout::get(dim)?, order, value))
    }

    /// Constant with the same dimension and order as `self`.
    pub fn constant_like(&self, value: T) -> Jet<T> {
        Jet::from_layout(self.layout, self.order, value)
    }

    pub fn variable(dim: usize, order: usize, value: T, var: usize) -> Result<Jet<T>, JetError> {
        if var >= dim {
            return Err(JetError::VariableOutOfRange { var, dim });
        }
        let mut jet = Jet::constant(dim, order, value)?;
        if order >= 1 {
            jet.coeffs[1 + var] = T::one();
        }
        Ok(jet)
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> T {
        self.coeffs[0]
    }

    pub fn layout(&self) -> &'static Layout {
        self.layout
    }

    /// Raw Taylor coefficients in graded order.
    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Taylor coefficient for a multi-index (one exponent per variable).
    pub fn coeff(&self, multi_index: &[usize]) -> Result<T, JetError> {
        let rank = self.rank(multi_index)?;
        Ok(self.coeffs[rank])
    }

    fn rank(&self, multi_index: &[usize]) -> Result<usize, JetError> {
        if multi_index.len() != self.dim() {
            return Err(JetError::DimMismatch(multi_index.len(), self.dim()));
        }
        let degree: usize = multi_index.iter().sum();
        if degree > self.order {
            return Err(JetError::DegreeExceedsOrder {
                index: multi_index.to_vec(),
                order: self.order,
            });
        }
        let key: Vec<u8> = multi_index.iter().map(|&e| e as u8).collect();
        self.layout.rank_of(&key).ok_or(JetError::DegreeExceedsOrder {
            index: multi_index.to_vec(),
            order: self.order,
        })
    }

    /// The partial derivative itself: coefficient times multi-index factorial.
    pub fn extract_partial(&self, multi_index: &[usize]) -> Result<T, JetError> {
        let rank = self.rank(multi_index)?;
        Ok(self.coeffs[rank] * cast::<T>(self.layout.factorials[rank]))
    }

    /// First partial derivative of a variable.
    pub fn gradient(&self, var: usize) -> Result<T, JetError> {
        if var >= self.dim() {
            return Err(JetError::VariableOutOfRange { var, dim: self.dim() });
        }
        if self.order == 0 {
            return Err(JetError::NothingToDifferentiate);
        }
        Ok(self.coeffs[1 + var])
    }

    /// Jet of `∂self/∂var`, one order lower.
    pub fn derivative(&self, var: usize) -> Result<Jet<T>, JetError> {
        if var >= self.dim() {
            return Err(JetError::VariableOutOfRange { var, dim: self.dim() });
        }
        if self.order == 0 {
            return Err(JetError::NothingToDifferentiate);
        }
        let order = self.order - 1;
        let mut out = Jet::from_layout(self.layout, order, T::zero());
        let end = self.layout.deriv_end[var][self.order];
        for &(src, dst, factor) in &self.layout.derivs[var][..end] {
            out.coeffs[dst as usize] = self.coeffs[src as usize] * cast::<T>(factor as f64);
        }
        Ok(out)
    }

    /// Drop every coefficient above `order`.
    pub fn truncate(&self, order: usize) -> Jet<T> {
        let order = order.min(self.order);
        Jet {
            layout: self.layout,
            order,
            coeffs: self.coeffs[..self.layout.len(order)].to_vec(),
        }
    }

    fn assert_compatible(&self, other: &Jet<T>) {
        assert!(
            std::ptr::eq(self.layout, other.layout),
            "jets of dimension {} and {} combined",
            self.dim(),
            other.dim()
        );
    }

    fn check_compatible(&self, other: &Jet<T>) -> Result<(), JetError> {
        if std::ptr::eq(self.layout, other.layout) {
            Ok(())
        } else {
            Err(JetError::DimMismatch(self.dim(), other.dim()))
        }
    }

    fn zip(&self, other: &Jet<T>, f: impl Fn(T, T) -> T) -> Jet<T> {
        self.assert_compatible(other);
        let order = self.order.min(other.order);
        let len = self.layout.len(order);
        Jet {
            layout: self.layout,
            order,
            coeffs: self.coeffs[..len]
                .iter()
                .zip(&other.coeffs[..len])
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Jet<T>) -> Jet<T> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Jet<T>) -> Jet<T> {
        self.zip(other, |a, b| a - b)
    }

    pub fn neg(&self) -> Jet<T> {
        self.scale(-T::one())
    }

    pub fn scale(&self, factor: T) -> Jet<T> {
        Jet {
            layout: self.layout,
            order: self.order,
            coeffs: self.coeffs.iter().map(|&c| c * factor).collect(),
        }
    }

    pub fn add_scalar(&self, value: T) -> Jet<T> {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0] + value;
        out
    }

    /// `self += factor * other`, truncating to the lower order.
    pub fn axpy(&mut self, factor: T, other: &Jet<T>) {
        self.assert_compatible(other);
        if other.order < self.order {
            self.order = other.order;
            self.coeffs.truncate(self.layout.len(other.order));
        }
        for (c, &o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c = *c + factor * o;
        }
    }

    pub fn mul(&self, other: &Jet<T>) -> Jet<T> {
        self.assert_compatible(other);
        let order = self.order.min(other.order);
        let mut coeffs = vec![T::zero(); self.layout.len(order)];
        let (a, b) = (&self.coeffs, &other.coeffs);
        for &(i, j, k) in &self.layout.products[..self.layout.product_end[order]] {
            coeffs[k as usize] = coeffs[k as usize] + a[i as usize] * b[j as usize];
        }
        Jet {
            layout: self.layout,
            order,
            coeffs,
        }
    }

    /// `f(self)` given the univariate Taylor coefficients of `f` at the
    /// constant term (`taylor[k] = f^(k)(c)/k!`).
    pub fn compose(&self, taylor: &[T]) -> Jet<T> {
        debug_assert!(taylor.len() > self.order);
        let mut h = self.clone();
        h.coeffs[0] = T::zero();
        let mut out = self.constant_like(taylor[self.order]);
        for k in (0..self.order).rev() {
            out = out.mul(&h).add_scalar(taylor[k]);
        }
        out
    }

    pub fn recip(&self) -> Result<Jet<T>, JetError> {
        let a = self.value();
        if a == T::zero() || !a.is_finite() {
            return Err(domain("div", "divisor has zero constant term"));
        }
        let inv = a.recip();
        let mut taylor = Vec::with_capacity(self.order + 1);
        let mut term = inv;
        for _ in 0..=self.order {
            taylor.push(term);
            term = -term * inv;
        }
        Ok(self.compose(&taylor))
    }

    pub fn div(&self, other: &Jet<T>) -> Result<Jet<T>, JetError> {
        self.check_compatible(other)?;
        Ok(self.mul(&other.recip()?))
    }

    /// Integer power by repeated squaring; negative exponents go through
    /// the reciprocal.
    pub fn powi(&self, exponent: i64) -> Result<Jet<T>, JetError> {
        let base = if exponent < 0 { self.recip()? } else { self.clone() };
        let mut e = exponent.unsigned_abs();
        let mut acc = self.constant_like(T::one());
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&sq);
            }
            e >>= 1;
            if e > 0 {
                sq = sq.mul(&sq);
            }
        }
        Ok(acc)
    }

    /// `self^(num/den)`: integer chain for `den == 1`, otherwise the binomial
    /// series on a strictly positive constant term.
    pub fn pow_rational(&self, num: i64, den: i64) -> Result<Jet<T>, JetError> {
        if den <= 0 {
            return Err(domain("pow", "exponent denominator must be positive"));
        }
        if num % den == 0 {
            return self.powi(num / den);
        }
        let a = self.value();
        if !(a > T::zero()) {
            return Err(domain("pow", format!("fractional power of non-positive base {a:?}")));
        }
        let r = cast::<T>(num as f64) / cast::<T>(den as f64);
        let mut taylor = Vec::with_capacity(self.order + 1);
        let mut binom = T::one();
        for k in 0..=self.order {
            let kk = cast::<T>(k as f64);
            taylor.push(binom * a.powf(r - kk));
            binom = binom * (r - kk) / (kk + T::one());
        }
        Ok(self.compose(&taylor))
    }

    pub fn sqrt(&self) -> Result<Jet<T>, JetError> {
        if !(self.value() > T::zero()) {
            return Err(domain("sqrt", format!("non-positive argument {:?}", self.value())));
        }
        self.pow_rational(1, 2)
    }

    pub fn exp(&self) -> Jet<T> {
        let e = self.value().exp();
        let mut taylor = Vec::with_capacity(self.order + 1);
        let mut fact = T::one();
        for k in 0..=self.order {
            if k > 0 {
                fact = fact * cast::<T>(k as f64);
            }
            taylor.push(e / fact);
        }
        self.compose(&taylor)
    }

    pub fn ln(&self) -> Result<Jet<T>, JetError> {
        let a = self.value();
        if !(a > T::zero()) {
            return Err(domain("log", format!("non-positive argument {a:?}")));
        }
        let mut taylor = vec![a.ln()];
        let mut pow = T::one();
        for k in 1..=self.order {
            pow = pow * a;
            let sign = if k % 2 == 1 { T::one() } else { -T::one() };
            taylor.push(sign / (cast::<T>(k as f64) * pow));
        }
        Ok(self.compose(&taylor))
    }

    fn trig(&self, phase: usize) -> Jet<T> {
        // phase 0: sin, phase 1: cos
        let (s, c) = (self.value().sin(), self.value().cos());
        let cycle = [s, c, -s, -c];
        let mut taylor = Vec::with_capacity(self.order + 1);
        let mut fact = T::one();
        for k in 0..=self.order {
            if k > 0 {
                fact = fact * cast::<T>(k as f64);
            }
            taylor.push(cycle[(k + phase) % 4] / fact);
        }
        self.compose(&taylor)
    }

    pub fn sin(&self) -> Jet<T> {
        self.trig(0)
    }

    pub fn cos(&self) -> Jet<T> {
        self.trig(1)
    }

    /// Smooth branch of `|x|`: the jet times the sign of its constant term.
    pub fn abs(&self) -> Result<Jet<T>, JetError> {
        let a = self.value();
        if a == T::zero() || a.is_nan() {
            return Err(domain("abs", "not smooth at a zero constant term"));
        }
        Ok(if a < T::zero() { self.neg() } else { self.clone() })
    }
}

/// Operations understood by [`jet_apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    PowRational(i64, i64),
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Abs,
}

impl JetOp {
    fn name(&self) -> &'static str {
        match self {
            JetOp::Add => "add",
            JetOp::Sub => "sub",
            JetOp::Mul => "mul",
            JetOp::Div => "div",
            JetOp::Neg => "neg",
            JetOp::PowRational(..) => "pow",
            JetOp::Sqrt => "sqrt",
            JetOp::Exp => "exp",
            JetOp::Log => "log",
            JetOp::Sin => "sin",
            JetOp::Cos => "cos",
            JetOp::Abs => "abs",
        }
    }

    fn arity(&self) -> usize {
        match self {
            JetOp::Add | JetOp::Sub | JetOp::Mul | JetOp::Div => 2,
            _ => 1,
        }
    }
}

pub fn jet_apply<T: Scalar>(op: JetOp, args: &[Jet<T>]) -> Result<Jet<T>, JetError> {
    if args.len() != op.arity() {
        return Err(JetError::Arity {
            op: op.name(),
            expected: op.arity(),
            got: args.len(),
        });
    }
    if op.arity() == 2 {
        args[0].check_compatible(&args[1])?;
    }
    let a = &args[0];
    match op {
        JetOp::Add => Ok(a.add(&args[1])),
        JetOp::Sub => Ok(a.sub(&args[1])),
        JetOp::Mul => Ok(a.mul(&args[1])),
        JetOp::Div => a.div(&args[1]),
        JetOp::Neg => Ok(a.neg()),
        JetOp::PowRational(p, q) => a.pow_rational(p, q),
        JetOp::Sqrt => a.sqrt(),
        JetOp::Exp => Ok(a.exp()),
        JetOp::Log => a.ln(),
        JetOp::Sin => Ok(a.sin()),
        JetOp::Cos => Ok(a.cos()),
        JetOp::Abs => a.abs(),
    }
}

impl<T: Scalar> std::ops::Add for &Jet<T> {
    type Output = Jet<T>;
    fn add(self, rhs: &Jet<T>) -> Jet<T> {
        Jet::add(self, rhs)
    }
}

impl<T: Scalar> std::ops::Sub for &Jet<T> {
    type Output = Jet<T>;
    fn sub(self, rhs: &Jet<T>) -> Jet<T> {
        Jet::sub(self, rhs)
    }
}

impl<T: Scalar> std::ops::Mul for &Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: &Jet<T>) -> Jet<T> {
        Jet::mul(self, rhs)
    }
}

impl<T: Scalar> std::ops::Neg for &Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        Jet::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn layout_counts() {
        assert_eq!(Layout::get(1).unwrap().len(4), 5);
        assert_eq!(Layout::get(2).unwrap().len(2), 6);
        // C(10 + 4, 4)
        assert_eq!(Layout::get(10).unwrap().len(4), 1001);
        assert_eq!(Layout::get(0).unwrap().len(4), 1);
        assert!(Layout::get(MAX_VARS + 1).is_err());
    }

    #[test]
    fn seed_identity() {
        let seeds = seed_variables(&[2.0], &[0], 2).unwrap();
        assert_eq!(seeds[0].coeffs(), &[2.0, 1.0, 0.0]);
        let seeds = seed_variables(&[0.0, 3.0], &[1], 1).unwrap();
        assert_eq!(seeds[1].dim(), 1);
        assert_eq!(seeds[1].coeffs(), &[3.0, 1.0]);
        assert_eq!(seeds[0].coeffs(), &[0.0, 0.0]);
    }

    #[test]
    fn seed_errors() {
        assert_eq!(
            seed_variables(&[1.0], &[0], 5).unwrap_err(),
            JetError::OrderOutOfRange(5)
        );
        assert!(seed_variables(&[1.0, 2.0], &[0, 0], 2).is_err());
        assert!(seed_variables(&[1.0, 2.0], &[2], 2).is_err());
    }

    #[test]
    fn cube_of_seed() {
        let u = &seed_variables(&[2.0], &[0], 2).unwrap()[0];
        let cube = u.mul(u).mul(u);
        assert_eq!(cube.coeffs(), &[8.0, 12.0, 6.0]);
        assert_eq!(cube.extract_partial(&[2]).unwrap(), 12.0);
        assert_eq!(cube.extract_partial(&[0]).unwrap(), 8.0);
    }

    #[test]
    fn product_of_two_seeds() {
        let s = seed_variables(&[1.0, 2.0], &[0, 1], 2).unwrap();
        let p = s[0].mul(&s[1]);
        assert_eq!(p.coeff(&[0, 0]).unwrap(), 2.0);
        assert_eq!(p.coeff(&[1, 0]).unwrap(), 2.0);
        assert_eq!(p.coeff(&[0, 1]).unwrap(), 1.0);
        assert_eq!(p.coeff(&[1, 1]).unwrap(), 1.0);
        assert_eq!(p.coeff(&[2, 0]).unwrap(), 0.0);
        assert_eq!(p.coeff(&[0, 2]).unwrap(), 0.0);
    }

    #[test]
    fn mixed_partial_of_u2v() {
        let s = seed_variables(&[3.0, 5.0], &[0, 1], 3).unwrap();
        let f = s[0].mul(&s[0]).mul(&s[1]);
        assert_eq!(f.extract_partial(&[1, 1]).unwrap(), 6.0);
        assert_eq!(f.extract_partial(&[2, 1]).unwrap(), 2.0);
        assert!(matches!(
            f.extract_partial(&[2, 2]),
            Err(JetError::DegreeExceedsOrder { .. })
        ));
    }

    #[test]
    fn fractional_power_slope() {
        let u = &seed_variables(&[16.0], &[0], 2).unwrap()[0];
        let p = u.pow_rational(3, 4).unwrap();
        assert_relative_eq!(p.value(), 8.0, epsilon = 1e-14);
        assert_relative_eq!(p.extract_partial(&[1]).unwrap(), 0.375, epsilon = 1e-15);
    }

    #[test]
    fn domain_errors() {
        let u = &seed_variables(&[-1.0], &[0], 2).unwrap()[0];
        assert!(u.ln().is_err());
        assert!(u.sqrt().is_err());
        assert!(u.pow_rational(1, 3).is_err());
        assert!(u.pow_rational(2, 1).is_ok());
        let z = u.add_scalar(1.0);
        assert!(z.recip().is_err());
        assert!(z.abs().is_err());
        assert!(u.abs().unwrap().coeffs()[1] == -1.0);
    }

    #[test]
    fn derivative_drops_one_order() {
        let s = seed_variables(&[1.5, -0.5], &[0, 1], 4).unwrap();
        let f = s[0].mul(&s[0]).mul(&s[1]).exp();
        let d = f.derivative(0).unwrap();
        assert_eq!(d.order(), 3);
        for idx in [[0, 0], [1, 0], [0, 1], [2, 1], [1, 2], [0, 3]] {
            let mut up = idx;
            up[0] += 1;
            assert_relative_eq!(
                d.extract_partial(&idx).unwrap(),
                f.extract_partial(&up).unwrap(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn truncation_is_prefix() {
        let s = seed_variables(&[0.3, 0.7], &[0, 1], 4).unwrap();
        let f = s[0].sin().mul(&s[1].cos());
        let s3 = seed_variables(&[0.3, 0.7], &[0, 1], 3).unwrap();
        let f3 = s3[0].sin().mul(&s3[1].cos());
        assert_eq!(f.truncate(3).coeffs(), f3.coeffs());
    }

    #[test]
    fn apply_dispatch() {
        let s = seed_variables(&[2.0, 4.0], &[0, 1], 1).unwrap();
        let q = jet_apply(JetOp::Div, &s).unwrap();
        assert_relative_eq!(q.value(), 0.5);
        assert_relative_eq!(q.gradient(1).unwrap(), -2.0 / 16.0);
        assert!(matches!(jet_apply(JetOp::Exp, &s), Err(JetError::Arity { .. })));
        let other = seed_variables(&[1.0], &[0], 1).unwrap();
        assert!(jet_apply(JetOp::Add, &[s[0].clone(), other[0].clone()]).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let u = &seed_variables(&[2.0f32], &[0], 2).unwrap()[0];
        let c = u.mul(u).mul(u);
        assert_eq!(c.extract_partial(&[2]).unwrap(), 12.0f32);
    }
}
