//! LU factorization of small square matrices whose entries are jets.
//!
//! Pivoting uses the constant terms only: the matrices we factor (Finsler
//! metrics) are nondegenerate but indefinite, so a zero leading constant is
//! common and must be pivoted away.

use super::{Jet, JetError};
use crate::scalar::Scalar;

/// Row-major `n x n` jet matrix in factored form.
#[derive(Debug, Clone)]
pub struct JetLu<T> {
    n: usize,
    lu: Vec<Jet<T>>,
    // reciprocal of each U diagonal entry
    inv_diag: Vec<Jet<T>>,
    perm: Vec<usize>,
    parity: bool,
}

impl<T: Scalar> JetLu<T> {
    pub fn factor(matrix: &[Jet<T>], n: usize) -> Result<JetLu<T>, JetError> {
        assert_eq!(matrix.len(), n * n, "matrix is not {n}x{n}");
        let mut lu = matrix.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut parity = false;
        let mut inv_diag = Vec::with_capacity(n);
        let scale = matrix.iter().map(|j| j.value().abs()).fold(T::zero(), T::max);
        for k in 0..n {
            let pivot_row = (k..n)
                .max_by(|&a, &b| {
                    lu[a * n + k]
                        .value()
                        .abs()
                        .partial_cmp(&lu[b * n + k].value().abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("non-empty pivot range");
            let pivot = lu[pivot_row * n + k].value().abs();
            if pivot == T::zero() || pivot <= scale * T::epsilon() {
                return Err(JetError::Singular);
            }
            if pivot_row != k {
                for c in 0..n {
                    lu.swap(k * n + c, pivot_row * n + c);
                }
                perm.swap(k, pivot_row);
                parity = !parity;
            }
            let inv = lu[k * n + k].recip()?;
            for r in k + 1..n {
                let factor = lu[r * n + k].mul(&inv);
                for c in k + 1..n {
                    let update = factor.mul(&lu[k * n + c]);
                    lu[r * n + c] = lu[r * n + c].sub(&update);
                }
                lu[r * n + k] = factor;
            }
            inv_diag.push(inv);
        }
        Ok(JetLu {
            n,
            lu,
            inv_diag,
            perm,
            parity,
        })
    }

    pub fn solve(&self, rhs: &[Jet<T>]) -> Vec<Jet<T>> {
        let n = self.n;
        let mut x: Vec<Jet<T>> = self.perm.iter().map(|&p| rhs[p].clone()).collect();
        for r in 0..n {
            for c in 0..r {
                let t = self.lu[r * n + c].mul(&x[c]);
                x[r] = x[r].sub(&t);
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                let t = self.lu[r * n + c].mul(&x[c]);
                x[r] = x[r].sub(&t);
            }
            x[r] = x[r].mul(&self.inv_diag[r]);
        }
        x
    }

    /// Row-major inverse.
    pub fn inverse(&self) -> Vec<Jet<T>> {
        let n = self.n;
        let template = &self.lu[0];
        let mut inv = vec![template.constant_like(T::zero()); n * n];
        for col in 0..n {
            let e: Vec<Jet<T>> = (0..n)
                .map(|r| template.constant_like(if r == col { T::one() } else { T::zero() }))
                .collect();
            for (r, v) in self.solve(&e).into_iter().enumerate() {
                inv[r * n + col] = v;
            }
        }
        inv
    }

    pub fn determinant(&self) -> Jet<T> {
        let n = self.n;
        let mut det = self.lu[0].clone();
        for k in 1..n {
            det = det.mul(&self.lu[k * n + k]);
        }
        if self.parity {
            det.neg()
        } else {
            det
        }
    }
}
