//! Tensor-product Gauss–Legendre quadrature on coordinate boxes.
//!
//! Integrands are evaluated in parallel, but values are gathered in the
//! fixed node order and reduced by pairwise summation, so the result does
//! not depend on the number of worker threads.

use rayon::prelude::*;

use crate::scalar::Scalar;

/// Nodes (ascending) and weights of the `order`-point rule on `[-1, 1]`.
pub fn gauss_legendre<T: Scalar>(order: usize) -> (Vec<T>, Vec<T>) {
    assert!(order >= 1, "quadrature order must be positive");
    let c = |v: f64| T::from_f64(v).unwrap();
    let n = order;
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    for i in 0..n.div_ceil(2) {
        // Newton on P_n from the Tricomi-style initial guess
        let mut z = c((std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos());
        let mut dp = T::one();
        for _ in 0..100 {
            let (mut p0, mut p1) = (T::one(), z);
            for k in 2..=n {
                let k_t = c(k as f64);
                let p2 = ((c(2.0) * k_t - T::one()) * z * p1 - (k_t - T::one()) * p0) / k_t;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(z), p0 = P_{n-1}(z)
            dp = c(n as f64) * (z * p1 - p0) / (z * z - T::one());
            let step = p1 / dp;
            z = z - step;
            if step.abs() <= T::epsilon() * c(2.0) {
                break;
            }
        }
        let w = c(2.0) / ((T::one() - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    (nodes, weights)
}

/// Sum by recursive halving; deterministic for a given input order.
pub fn pairwise_sum<T: Scalar>(values: &[T]) -> T {
    if values.len() <= 8 {
        values.iter().fold(T::zero(), |acc, &v| acc + v)
    } else {
        let (a, b) = values.split_at(values.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Tensor-product nodes (first axis slowest) and weights on a box.
pub fn tensor_rule<T: Scalar>(lower: &[T], upper: &[T], orders: &[usize]) -> (Vec<Vec<T>>, Vec<T>) {
    assert!(
        lower.len() == upper.len() && lower.len() == orders.len(),
        "box and order dimensions differ"
    );
    let half = T::from_f64(0.5).unwrap();
    let rules: Vec<(Vec<T>, Vec<T>)> = orders
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&q, (&a, &b))| {
            let (x, w) = gauss_legendre::<T>(q);
            let (mid, rad) = ((a + b) * half, (b - a) * half);
            (
                x.into_iter().map(|t| mid + rad * t).collect(),
                w.into_iter().map(|w| w * rad).collect(),
            )
        })
        .collect();
    let mut points = vec![Vec::new()];
    let mut weights = vec![T::one()];
    for (x, w) in &rules {
        let mut next_p = Vec::with_capacity(points.len() * x.len());
        let mut next_w = Vec::with_capacity(points.len() * x.len());
        for (p, &pw) in points.iter().zip(&weights) {
            for (&xi, &wi) in x.iter().zip(w) {
                let mut q = p.clone();
                q.push(xi);
                next_p.push(q);
                next_w.push(pw * wi);
            }
        }
        points = next_p;
        weights = next_w;
    }
    (points, weights)
}

/// Evaluate `f` at every point in parallel, keeping the point order.
pub fn map_points<P, R, E, F>(points: &[P], f: F) -> Result<Vec<R>, E>
where
    P: Sync,
    R: Send,
    E: Send,
    F: Fn(&P) -> Result<R, E> + Sync + Send,
{
    points.par_iter().map(f).collect()
}

/// `Σ w_k v_k` with pairwise summation.
pub fn weighted_sum<T: Scalar>(values: &[T], weights: &[T]) -> T {
    let terms: Vec<T> = values.iter().zip(weights).map(|(&v, &w)| v * w).collect();
    pairwise_sum(&terms)
}

/// `∫_box f` with per-axis Gauss orders.
pub fn quad_domain<T, E, F>(f: F, lower: &[T], upper: &[T], orders: &[usize]) -> Result<T, E>
where
    T: Scalar,
    E: Send,
    F: Fn(&[T]) -> Result<T, E> + Sync + Send,
{
    let (points, weights) = tensor_rule(lower, upper, orders);
    let values = map_points(&points, |p| f(p))?;
    Ok(weighted_sum(&values, &weights))
}

/// Boundary face of a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

impl Face {
    /// `+1` on the upper face, `-1` on the lower one.
    pub fn sigma(&self) -> f64 {
        if self.upper {
            1.0
        } else {
            -1.0
        }
    }

    pub fn label(&self) -> String {
        format!("x{}_{}", self.axis, if self.upper { "upper" } else { "lower" })
    }
}

/// All `2n` faces: axis 0 lower, axis 0 upper, axis 1 lower, ...
pub fn faces(dim: usize) -> Vec<Face> {
    (0..dim)
        .flat_map(|axis| [false, true].map(|upper| Face { axis, upper }))
        .collect()
}

/// Nodes on a face (full coordinates) with weights of the face rule.
pub fn face_rule<T: Scalar>(lower: &[T], upper: &[T], orders: &[usize], face: Face) -> (Vec<Vec<T>>, Vec<T>) {
    let skip = |v: &[T]| -> Vec<T> {
        v.iter()
            .enumerate()
            .filter(|(i, _)| *i != face.axis)
            .map(|(_, &x)| x)
            .collect()
    };
    let o: Vec<usize> = orders
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != face.axis)
        .map(|(_, &q)| q)
        .collect();
    let (pts, w) = tensor_rule(&skip(lower), &skip(upper), &o);
    let level = if face.upper { upper[face.axis] } else { lower[face.axis] };
    let pts = pts
        .into_iter()
        .map(|mut p| {
            p.insert(face.axis, level);
            p
        })
        .collect();
    (pts, w)
}

/// `Σ_faces ∫_face f(face, x)`; the per-face integrals come back too.
pub fn quad_boundary<T, E, F>(f: F, lower: &[T], upper: &[T], orders: &[usize]) -> Result<(T, Vec<T>), E>
where
    T: Scalar,
    E: Send,
    F: Fn(Face, &[T]) -> Result<T, E> + Sync + Send,
{
    let mut per_face = Vec::new();
    for face in faces(lower.len()) {
        let (pts, w) = face_rule(lower, upper, orders, face);
        let values = map_points(&pts, |p| f(face, p))?;
        per_face.push(weighted_sum(&values, &w));
    }
    Ok((pairwise_sum(&per_face), per_face))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::convert::Infallible;

    #[test]
    fn unit_square_area() {
        let v = quad_domain(|_| Ok::<_, Infallible>(1.0), &[0.0, 0.0], &[1.0, 1.0], &[3, 5]).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn exact_degree() {
        let v = quad_domain(|x: &[f64]| Ok::<_, Infallible>(x[0].powi(7)), &[0.0], &[1.0], &[4]).unwrap();
        assert_relative_eq!(v, 0.125, epsilon = 1e-15);
    }

    #[test]
    fn sine_on_half_period() {
        let v = quad_domain(
            |x: &[f64]| Ok::<_, Infallible>(x[0].sin()),
            &[0.0],
            &[std::f64::consts::PI],
            &[12],
        )
        .unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn weights_sum_to_two_for_every_order() {
        for q in 1..=20 {
            let (x, w) = gauss_legendre::<f64>(q);
            assert_relative_eq!(pairwise_sum(&w), 2.0, epsilon = 1e-13);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn single_precision_rule() {
        let (_, w) = gauss_legendre::<f32>(6);
        assert!((w.iter().sum::<f32>() - 2.0).abs() < 1e-5);
    }

    #[test]
    fn boundary_of_cube_flux() {
        // flux of (x, 0, 0) through the unit cube: 1
        let (total, per_face) = quad_boundary(
            |f: Face, x: &[f64]| Ok::<_, Infallible>(if f.axis == 0 { f.sigma() * x[0] } else { 0.0 }),
            &[0.0; 3],
            &[1.0; 3],
            &[2, 2, 2],
        )
        .unwrap();
        assert_relative_eq!(total, 1.0, epsilon = 1e-15);
        assert_eq!(per_face.len(), 6);
    }
}
