//! Pointwise tensors at a fiber point `(x, y)`.
//!
//! A [`FiberGeometry`] expands `L` once as a jet in the `2n` variables
//! `(x^0.., y^0..)` (variable `μ` is `x^μ`, variable `n + μ` is `y^μ`) and
//! derives every object from that single expansion:
//!
//! | object | formula | jet order kept |
//! |--------|---------|----------------|
//! | `g_{μν}` | `∂²L/∂y^μ∂y^ν` | K − 2 |
//! | `C_{αβγ}` | `½ ∂g_{βγ}/∂y^α` | K − 3 |
//! | `G^α` | `½ g^{αδ}(y^γ ∂²L/∂x^γ∂y^δ − ∂L/∂x^δ)` | K − 2 |
//! | `N^α_μ` | `∂G^α/∂y^μ` | K − 3 |
//! | `G^α_{μν}` | `∂N^α_μ/∂y^ν` | K − 4 |
//! | `Γ^α_{βγ}` | `½ g^{ασ}(δ_β g_{σγ} + δ_γ g_{σβ} − δ_σ g_{βγ})` | values |
//!
//! with `δ_μ = ∂/∂x^μ − N^ν_μ ∂/∂y^ν`. Order 3 gives everything except the
//! Berwald and Landsberg tensors, which need order 4.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::catalog::LagrangianSpec;
use crate::error::{GeometryError, Result};
use crate::expr::Expr;
use crate::jets::linalg::JetLu;
use crate::jets::{seed_variables, Jet};
use crate::Jet64;

/// Index position of a tensor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Valence {
    Up,
    Down,
}

use Valence::{Down, Up};

/// A point `(x, y)` of the slit tangent bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FiberPoint {
    pub fn new(x: &[f64], y: &[f64]) -> FiberPoint {
        FiberPoint {
            x: x.to_vec(),
            y: y.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Dense components of a tensor at a fiber point, row-major in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBlock {
    pub dim: usize,
    pub valence: Vec<Valence>,
    pub entries: Vec<f64>,
    pub base: FiberPoint,
}

impl TensorBlock {
    pub fn new(dim: usize, valence: Vec<Valence>, entries: Vec<f64>, base: FiberPoint) -> Self {
        assert_eq!(entries.len(), dim.pow(valence.len() as u32), "entry count");
        TensorBlock {
            dim,
            valence,
            entries,
            base,
        }
    }

    pub fn rank(&self) -> usize {
        self.valence.len()
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.rank(), "index rank");
        index.iter().fold(0, |acc, &i| {
            assert!(i < self.dim, "index {i} out of range");
            acc * self.dim + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.entries[self.offset(index)]
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise difference.
    pub fn max_diff(&self, other: &TensorBlock) -> f64 {
        assert_eq!(self.entries.len(), other.entries.len(), "shape mismatch");
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest deviation from symmetry under swapping slots `a` and `b`.
    pub fn symmetry_defect(&self, a: usize, b: usize) -> f64 {
        let rank = self.rank();
        let mut worst: f64 = 0.0;
        let mut index = vec![0; rank];
        for flat in 0..self.entries.len() {
            let mut r = flat;
            for slot in (0..rank).rev() {
                index[slot] = r % self.dim;
                r /= self.dim;
            }
            let v = self.entries[flat];
            index.swap(a, b);
            worst = worst.max((v - self.get(&index)).abs());
        }
        worst
    }
}

/// How [`FiberGeometry::mean_cartan_torsion`] computes `I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanCartanMethod {
    /// `g^{αβ} C_{αβγ}`.
    Contract,
    /// `½ ∂/∂y^γ log|det g|` with a jet determinant.
    LogDet,
}

/// Relative degeneracy threshold for `|det g| / Π‖row‖`.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// All fiber-point tensors of a Lagrangian, computed from one jet of `L`.
#[derive(Debug, Clone)]
pub struct FiberGeometry<'a> {
    spec: &'a LagrangianSpec,
    point: FiberPoint,
    order: usize,
    seeds: Vec<Jet64>,
    lagrangian: Jet64,
    g: Vec<Jet64>,
    ginv: Vec<Jet64>,
    log_det: Jet64,
    spray: Vec<Jet64>,
    nonlinear: Vec<Jet64>,
    // δ_μ g_{αβ} at [(μ n + α) n + β]
    delta_g: Vec<Jet64>,
    christoffel: Vec<f64>,
    berwald: Option<Vec<f64>>,
}

impl<'a> FiberGeometry<'a> {
    /// Expand at `(x, y)` with jets of order `order` (3 or 4).
    pub fn new(spec: &'a LagrangianSpec, x: &[f64], y: &[f64], order: usize) -> Result<Self> {
        if !(3..=4).contains(&order) {
            return Err(GeometryError::OrderTooLow {
                what: "fiber geometry",
                needed: 3,
                have: order,
            });
        }
        spec.check_admissible(x, y)?;
        let n = spec.dim();
        let point: Vec<f64> = x.iter().chain(y).copied().collect();
        let active: Vec<usize> = (0..2 * n).collect();
        let seeds = seed_variables(&point, &active, order)?;
        let lagrangian = spec.eval_jet(&seeds[..n], &seeds[n..])?;

        let grad_y: Vec<Jet64> = (0..n)
            .map(|mu| lagrangian.derivative(n + mu))
            .collect::<std::result::Result<_, _>>()?;
        let mut g = vec![lagrangian.constant_like(0.0); n * n];
        for mu in 0..n {
            for nu in mu..n {
                let h = grad_y[mu].derivative(n + nu)?;
                g[nu * n + mu] = h.clone();
                g[mu * n + nu] = h;
            }
        }
        check_nondegenerate(&g, n)?;
        let lu = JetLu::factor(&g, n).map_err(|_| GeometryError::Degenerate { ratio: 0.0 })?;
        let ginv = lu.inverse();
        let det = lu.determinant();
        let log_det = if det.value() < 0.0 { det.neg() } else { det }.ln()?;

        // 2G^α = g^{αδ}(y^γ ∂x_γ ∂y_δ L − ∂x_δ L)
        let mut rhs = Vec::with_capacity(n);
        for delta in 0..n {
            let mut acc = lagrangian.derivative(delta)?.neg();
            for gamma in 0..n {
                let mixed = grad_y[delta].derivative(gamma)?;
                acc = acc.add(&mixed.mul(&seeds[n + gamma]));
            }
            rhs.push(acc);
        }
        let spray: Vec<Jet64> = (0..n)
            .map(|alpha| {
                let mut acc = rhs[0].constant_like(0.0);
                for (delta, r) in rhs.iter().enumerate() {
                    acc = acc.add(&ginv[alpha * n + delta].mul(r));
                }
                acc.scale(0.5)
            })
            .collect();
        let mut nonlinear = Vec::with_capacity(n * n);
        for s in &spray {
            for mu in 0..n {
                nonlinear.push(s.derivative(n + mu)?);
            }
        }

        let mut geom = FiberGeometry {
            spec,
            point: FiberPoint::new(x, y),
            order,
            seeds,
            lagrangian,
            g,
            ginv,
            log_det,
            spray,
            nonlinear,
            delta_g: Vec::new(),
            christoffel: Vec::new(),
            berwald: None,
        };
        let mut delta_g = Vec::with_capacity(n * n * n);
        for mu in 0..n {
            for ab in 0..n * n {
                delta_g.push(geom.delta(&geom.g[ab], mu)?);
            }
        }
        geom.delta_g = delta_g;
        geom.christoffel = geom.assemble_christoffel();
        if order >= 4 {
            let mut berwald = Vec::with_capacity(n * n * n);
            for alpha in 0..n {
                for mu in 0..n {
                    for nu in 0..n {
                        let d = geom.nonlinear[alpha * n + mu].derivative(n + nu)?;
                        berwald.push(d.value());
                    }
                }
            }
            geom.berwald = Some(berwald);
        }
        Ok(geom)
    }

    fn assemble_christoffel(&self) -> Vec<f64> {
        let n = self.dim();
        let dg = |mu: usize, a: usize, b: usize| self.delta_g[(mu * n + a) * n + b].value();
        let mut out = vec![0.0; n * n * n];
        for alpha in 0..n {
            for beta in 0..n {
                for gamma in beta..n {
                    let mut acc = 0.0;
                    for sigma in 0..n {
                        let lower = dg(beta, sigma, gamma) + dg(gamma, sigma, beta) - dg(sigma, beta, gamma);
                        acc += self.ginv[alpha * n + sigma].value() * lower;
                    }
                    out[(alpha * n + beta) * n + gamma] = 0.5 * acc;
                    out[(alpha * n + gamma) * n + beta] = 0.5 * acc;
                }
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn spec(&self) -> &'a LagrangianSpec {
        self.spec
    }

    pub fn point(&self) -> &FiberPoint {
        &self.point
    }

    /// Jet seeds of the chart coordinates `x^μ`.
    pub fn x_jets(&self) -> &[Jet64] {
        &self.seeds[..self.dim()]
    }

    /// Jet seeds of the fiber coordinates `y^μ`.
    pub fn y_jets(&self) -> &[Jet64] {
        &self.seeds[self.dim()..]
    }

    pub fn lagrangian_jet(&self) -> &Jet64 {
        &self.lagrangian
    }

    /// Row-major jets of `g_{μν}`.
    pub fn metric_jets(&self) -> &[Jet64] {
        &self.g
    }

    /// Row-major jets of `g^{μν}`.
    pub fn inverse_metric_jets(&self) -> &[Jet64] {
        &self.ginv
    }

    /// Jets of `N^α_μ` at `[α n + μ]`.
    pub fn nonlinear_jets(&self) -> &[Jet64] {
        &self.nonlinear
    }

    fn block(&self, valence: Vec<Valence>, entries: Vec<f64>) -> TensorBlock {
        TensorBlock::new(self.dim(), valence, entries, self.point.clone())
    }

    fn values(jets: &[Jet64]) -> Vec<f64> {
        jets.iter().map(Jet::value).collect()
    }

    pub fn metric(&self) -> TensorBlock {
        self.block(vec![Down, Down], Self::values(&self.g))
    }

    pub fn inverse_metric(&self) -> TensorBlock {
        self.block(vec![Up, Up], Self::values(&self.ginv))
    }

    /// Sorted eigenvalue signs of `g`.
    pub fn signature(&self) -> Vec<i8> {
        let n = self.dim();
        let m = DMatrix::from_row_slice(n, n, &Self::values(&self.g));
        let mut signs: Vec<i8> = SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .map(|&v| if v < 0.0 { -1 } else { 1 })
            .collect();
        signs.sort();
        signs
    }

    /// Compare the detected signature with the declared signature, if any.
    pub fn check_signature(&self) -> Result<()> {
        match self.spec.expected_signature() {
            Some(expected) if expected != self.signature().as_slice() => Err(GeometryError::SignatureMismatch {
                expected: expected.to_vec(),
                found: self.signature(),
            }),
            _ => Ok(()),
        }
    }

    /// `C_{αβγ}`.
    pub fn cartan_torsion(&self) -> TensorBlock {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n * n);
        for alpha in 0..n {
            for bg in 0..n * n {
                let d = self.g[bg].derivative(n + alpha).expect("order ≥ 3");
                out.push(0.5 * d.value());
            }
        }
        self.block(vec![Down, Down, Down], out)
    }

    pub fn mean_cartan_torsion(&self, method: MeanCartanMethod) -> TensorBlock {
        let n = self.dim();
        let entries = match method {
            MeanCartanMethod::Contract => {
                let c = self.cartan_torsion();
                (0..n)
                    .map(|gamma| {
                        let mut acc = 0.0;
                        for a in 0..n {
                            for b in 0..n {
                                acc += self.ginv[a * n + b].value() * c.get(&[a, b, gamma]);
                            }
                        }
                        acc
                    })
                    .collect()
            }
            MeanCartanMethod::LogDet => (0..n)
                .map(|gamma| 0.5 * self.log_det.gradient(n + gamma).expect("order ≥ 1"))
                .collect(),
        };
        self.block(vec![Down], entries)
    }

    /// `G^α`.
    pub fn spray(&self) -> TensorBlock {
        self.block(vec![Up], Self::values(&self.spray))
    }

    /// `N^α_μ`.
    pub fn nonlinear_connection(&self) -> TensorBlock {
        self.block(vec![Up, Down], Self::values(&self.nonlinear))
    }

    /// `G^α_{μν}`; needs an order-4 context.
    pub fn berwald_coeffs(&self) -> Result<TensorBlock> {
        let entries = self.berwald.clone().ok_or(GeometryError::OrderTooLow {
            what: "Berwald coefficients",
            needed: 4,
            have: self.order,
        })?;
        Ok(self.block(vec![Up, Down, Down], entries))
    }

    /// `Γ^α_{βγ}` of the Chern–Rund connection.
    pub fn chern_rund_coeffs(&self) -> TensorBlock {
        self.block(vec![Up, Down, Down], self.christoffel.clone())
    }

    /// `(L^α_{βγ}, J_β)` with `L = G − Γ` and `J_β = L^μ_{βμ}`.
    pub fn landsberg(&self) -> Result<(TensorBlock, TensorBlock)> {
        let n = self.dim();
        let berwald = self.berwald_coeffs()?;
        let entries: Vec<f64> = berwald
            .entries
            .iter()
            .zip(&self.christoffel)
            .map(|(b, c)| b - c)
            .collect();
        let landsberg = self.block(vec![Up, Down, Down], entries);
        let trace = (0..n)
            .map(|beta| (0..n).map(|mu| landsberg.get(&[mu, beta, mu])).sum())
            .collect();
        Ok((landsberg, self.block(vec![Down], trace)))
    }

    /// `δ_μ f = ∂f/∂x^μ − N^ν_μ ∂f/∂y^ν`, one order below the lower of
    /// `f` and `N`.
    pub fn delta(&self, f: &Jet64, mu: usize) -> Result<Jet64> {
        let n = self.dim();
        let mut out = f.derivative(mu)?;
        for nu in 0..n {
            let t = self.nonlinear[nu * n + mu].mul(&f.derivative(n + nu)?);
            out = out.sub(&t);
        }
        Ok(out)
    }

    /// `δ_μ` of a scalar field given as an expression in `(x, y)`.
    pub fn delta_derivative(&self, field: &Expr, mu: usize) -> Result<f64> {
        let f = field.eval_jet(self.x_jets(), self.y_jets(), self.spec.params())?;
        Ok(self.delta(&f, mu)?.value())
    }

    /// Jet of `δ_μ g_{αβ}`.
    pub fn delta_metric_jet(&self, mu: usize, alpha: usize, beta: usize) -> &Jet64 {
        let n = self.dim();
        &self.delta_g[(mu * n + alpha) * n + beta]
    }

    /// `max_{α,β,γ} |δ_γ g_{αβ} − Γ^μ_{αγ} g_{μβ} − Γ^μ_{βγ} g_{αμ}|`.
    pub fn metric_compatibility_residual(&self) -> f64 {
        let n = self.dim();
        let gam = |a: usize, b: usize, c: usize| self.christoffel[(a * n + b) * n + c];
        let g = |a: usize, b: usize| self.g[a * n + b].value();
        let mut worst: f64 = 0.0;
        for alpha in 0..n {
            for beta in 0..n {
                for gamma in 0..n {
                    let mut r = self.delta_metric_jet(gamma, alpha, beta).value();
                    for mu in 0..n {
                        r -= gam(mu, alpha, gamma) * g(mu, beta) + gam(mu, beta, gamma) * g(alpha, mu);
                    }
                    worst = worst.max(r.abs());
                }
            }
        }
        worst
    }

    /// `max_α |Γ^μ_{αμ} − δ_α ln √|det g||`.
    pub fn trace_identity_residual(&self) -> Result<f64> {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for alpha in 0..n {
            let trace: f64 = (0..n).map(|mu| self.christoffel[(mu * n + alpha) * n + mu]).sum();
            let rhs = 0.5 * self.delta(&self.log_det, alpha)?.value();
            worst = worst.max((trace - rhs).abs());
        }
        Ok(worst)
    }

    /// `√|det g|` at the point.
    pub fn volume_density(&self) -> f64 {
        (0.5 * self.log_det.value()).exp()
    }

    /// Jet of `log|det g|`.
    pub fn log_det_jet(&self) -> &Jet64 {
        &self.log_det
    }
}

/// Reject `g` when `|det g| / Π‖row‖` falls below the threshold.
pub(crate) fn check_nondegenerate(g: &[Jet64], n: usize) -> Result<()> {
    let values: Vec<f64> = g.iter().map(Jet::value).collect();
    check_nondegenerate_values(&values, n)
}

pub(crate) fn check_nondegenerate_values(values: &[f64], n: usize) -> Result<()> {
    let m = DMatrix::from_row_slice(n, n, values);
    let norms: f64 = m.row_iter().map(|r| r.norm()).product();
    let ratio = if norms > 0.0 {
        m.determinant().abs() / norms
    } else {
        0.0
    };
    if ratio.is_nan() || ratio < DEGENERACY_THRESHOLD {
        Err(GeometryError::Degenerate { ratio })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_lagrangian, LagrangianParams};
    use crate::expr::Params;
    use approx::assert_relative_eq;

    fn friedmann(a: &str) -> LagrangianSpec {
        let row = |i: usize| {
            (0..4)
                .map(|j| match (i, j) {
                    (0, 0) => "-1".to_string(),
                    (i, j) if i == j => format!("({a})^2"),
                    _ => "0".to_string(),
                })
                .collect::<Vec<_>>()
        };
        let p = LagrangianParams {
            metric: Some((0..4).map(row).collect()),
            ..Default::default()
        };
        build_lagrangian("quadratic_metric", 4, &p, &Params::new()).unwrap()
    }

    fn quartic(dim: usize) -> LagrangianSpec {
        let p = LagrangianParams {
            weights: Some(
                (0..dim)
                    .map(|i| format!("1 + 0.{}*x{}^2", i + 1, (i + 1) % dim))
                    .collect(),
            ),
            ..Default::default()
        };
        build_lagrangian("quartic", dim, &p, &Params::new()).unwrap()
    }

    #[test]
    fn minkowski_is_flat() {
        let spec = build_lagrangian("minkowski", 4, &Default::default(), &Params::new()).unwrap();
        let geo = FiberGeometry::new(&spec, &[0.1, 0.2, 0.3, 0.4], &[1.0, 0.3, 0.2, 0.1], 4).unwrap();
        let g = geo.metric();
        for i in 0..4 {
            for j in 0..4 {
                let e = if i != j {
                    0.0
                } else if i == 0 {
                    -1.0
                } else {
                    1.0
                };
                assert_eq!(g.get(&[i, j]), e);
            }
        }
        assert_eq!(geo.inverse_metric().max_diff(&g), 0.0);
        assert!(geo.spray().max_abs() == 0.0);
        assert!(geo.berwald_coeffs().unwrap().max_abs() == 0.0);
        assert!(geo.chern_rund_coeffs().max_abs() == 0.0);
        assert_eq!(geo.signature(), vec![-1, 1, 1, 1]);
    }

    #[test]
    fn friedmann_metric_and_inverse() {
        let spec = friedmann("x0");
        let geo = FiberGeometry::new(&spec, &[2.0, 0.0, 0.0, 0.0], &[1.0, 0.1, 0.0, 0.0], 3).unwrap();
        let g = geo.metric();
        let gi = geo.inverse_metric();
        for i in 1..4 {
            assert_relative_eq!(g.get(&[i, i]), 4.0, epsilon = 1e-14);
            assert_relative_eq!(gi.get(&[i, i]), 0.25, epsilon = 1e-14);
        }
        assert_relative_eq!(gi.get(&[0, 0]), -1.0, epsilon = 1e-14);
    }

    #[test]
    fn friedmann_spray_against_christoffels() {
        // a = x0 at x0 = 2: Γ^0_{11} = a ȧ = 2, Γ^1_{01} = ȧ/a = 1/2
        let spec = friedmann("x0");
        let geo = FiberGeometry::new(&spec, &[2.0, 0.0, 0.0, 0.0], &[1.0, 1.0, 0.0, 0.0], 4).unwrap();
        let spray = geo.spray();
        assert_relative_eq!(spray.get(&[0]), 1.0, epsilon = 1e-12);
        assert_relative_eq!(spray.get(&[1]), 0.5, epsilon = 1e-12);
        let b = geo.berwald_coeffs().unwrap();
        assert_relative_eq!(b.get(&[0, 1, 1]), 2.0, epsilon = 1e-12);
        assert_relative_eq!(b.get(&[1, 0, 1]), 0.5, epsilon = 1e-12);
        assert!(b.max_diff(&geo.chern_rund_coeffs()) < 1e-12);
    }

    #[test]
    fn quartic_tensors_are_consistent() {
        let spec = quartic(3);
        let geo = FiberGeometry::new(&spec, &[0.3, -0.2, 0.5], &[0.4, 1.1, -0.9], 4).unwrap();
        let c = geo.cartan_torsion();
        assert!(c.symmetry_defect(0, 1) < 1e-12 && c.symmetry_defect(1, 2) < 1e-12);
        let i1 = geo.mean_cartan_torsion(MeanCartanMethod::Contract);
        let i2 = geo.mean_cartan_torsion(MeanCartanMethod::LogDet);
        assert!(i1.max_abs() > 1e-3);
        assert!(i1.max_diff(&i2) < 1e-9 * i1.max_abs().max(1.0));
        assert!(geo.metric_compatibility_residual() < 1e-9);
        assert!(geo.trace_identity_residual().unwrap() < 1e-9);
        let (l, j) = geo.landsberg().unwrap();
        let y = &geo.point().y;
        for a in 0..3 {
            for c in 0..3 {
                let contracted: f64 = (0..3).map(|b| l.get(&[a, b, c]) * y[b]).sum();
                assert!(contracted.abs() < 1e-9);
            }
        }
        assert!(j.max_abs() > 1e-6);
    }

    #[test]
    fn order_three_has_no_berwald() {
        let spec = quartic(3);
        let geo = FiberGeometry::new(&spec, &[0.0; 3], &[0.4, 1.1, -0.9], 3).unwrap();
        assert!(matches!(geo.berwald_coeffs(), Err(GeometryError::OrderTooLow { .. })));
    }

    #[test]
    fn degenerate_metric_is_rejected() {
        let p = LagrangianParams {
            expr: Some("y0^2".into()),
            ..Default::default()
        };
        let spec = build_lagrangian("custom_expression", 2, &p, &Params::new()).unwrap();
        assert!(matches!(
            FiberGeometry::new(&spec, &[0.0, 0.0], &[1.0, 1.0], 3),
            Err(GeometryError::Degenerate { .. })
        ));
    }

    #[test]
    fn signature_cross_check() {
        let p = LagrangianParams {
            signature: Some(vec![1, 1, 1, 1]),
            ..Default::default()
        };
        let spec = build_lagrangian("minkowski", 4, &p, &Params::new()).unwrap();
        let geo = FiberGeometry::new(&spec, &[0.0; 4], &[1.0, 0.0, 0.0, 0.0], 3).unwrap();
        assert!(matches!(
            geo.check_signature(),
            Err(GeometryError::SignatureMismatch { .. })
        ));
    }
}
