//! Built-in Finsler Lagrangians.
//!
//! | id | Lagrangian | admissible |
//! |----|------------|------------|
//! | `minkowski` | `½(-(y0)² + Σ (yi)²)` | `y ≠ 0` |
//! | `quadratic_metric` | `½ m_ij(x) y^i y^j` | `y ≠ 0` |
//! | `affine_sphere_friedmann` | `-(2/3^{3/4}) (α²)^{1/4} (β² - a²((y1)²+(y2)²))^{3/4}` | `α ≠ 0`, radicand `> 0` |
//! | `quartic` | `½ sgn (-w0 (y0)⁴ + Σ wi (yi)⁴)^{1/2}` | radicand `> 0`, every `yi ≠ 0` |
//! | `custom_expression` | user text in `x0..`, `y0..` | evaluates, `positive` constraints hold |
//!
//! For the affine sphere entry, `α = ½y0 + (√3/2) a y3` and
//! `β = (√3/2) y0 - ½ a y3` with coordinates `(t, x, y, z)` and scale factor
//! `a = a(x0)`. Every entry accepts an optional constant `chart` matrix `A`:
//! the Lagrangian is then evaluated at `(A x, A y)`.

use serde::Deserialize;

use crate::error::{GeometryError, Result};
use crate::expr::{Expr, Params, Scope};
use crate::jets::{seed_variables, Jet};
use crate::scalar::Scalar;

pub const CATALOG_IDS: [&str; 5] = [
    "minkowski",
    "quadratic_metric",
    "affine_sphere_friedmann",
    "quartic",
    "custom_expression",
];

/// Parameters accepted by [`build_lagrangian`]; which fields apply depends on the id.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianParams {
    /// Scale factor `a(t)` as an expression in `x0` (affine_sphere_friedmann).
    pub a: Option<String>,
    /// Symmetric matrix of expressions in `x` (quadratic_metric).
    pub metric: Option<Vec<Vec<String>>>,
    /// Overall sign, ±1 (quartic).
    pub sign: Option<f64>,
    /// Positive coefficient functions of `x`, one per axis (quartic).
    pub weights: Option<Vec<String>>,
    /// Lagrangian text (custom_expression).
    pub expr: Option<String>,
    /// Expressions that must be strictly positive on the domain (custom_expression).
    pub positive: Option<Vec<String>>,
    /// Constant linear chart change `A`, physical = A · local.
    pub chart: Option<Vec<Vec<f64>>>,
    /// Expected signs of the metric eigenvalues.
    pub signature: Option<Vec<i8>>,
}

#[derive(Debug, Clone)]
enum Kind {
    Minkowski,
    Quadratic { metric: Vec<Expr> },
    AffineSphere { scale: Expr },
    Quartic { sign: f64, weights: Vec<Expr> },
    Custom { expr: Expr, positive: Vec<Expr> },
}

/// A parameterized Finsler Lagrangian with its admissible domain.
#[derive(Debug, Clone)]
pub struct LagrangianSpec {
    id: String,
    dim: usize,
    kind: Kind,
    params: Params,
    chart: Option<Vec<f64>>,
    expected_signature: Option<Vec<i8>>,
}

fn malformed(msg: impl Into<String>) -> GeometryError {
    GeometryError::Invalid(msg.into())
}

fn parse_in(text: &str, scope: &Scope, what: &str) -> Result<Expr> {
    Expr::parse(text, scope).map_err(|e| malformed(format!("{what}: {e}")))
}

pub fn build_lagrangian(id: &str, dim: usize, params: &LagrangianParams, named: &Params) -> Result<LagrangianSpec> {
    if dim < 2 {
        return Err(malformed(format!("dimension {dim} < 2")));
    }
    let names = named.keys().cloned().collect::<Vec<_>>();
    let base = Scope::base(dim).with_params(names.clone());
    let fiber = Scope::fiber(dim).with_params(names);

    let allowed: &[&str] = match id {
        "minkowski" => &[],
        "quadratic_metric" => &["metric"],
        "affine_sphere_friedmann" => &["a"],
        "quartic" => &["sign", "weights"],
        "custom_expression" => &["expr", "positive"],
        other => {
            return Err(malformed(format!(
                "unknown catalog id `{other}` (expected one of {CATALOG_IDS:?})"
            )))
        }
    };
    let given = [
        ("a", params.a.is_some()),
        ("metric", params.metric.is_some()),
        ("sign", params.sign.is_some()),
        ("weights", params.weights.is_some()),
        ("expr", params.expr.is_some()),
        ("positive", params.positive.is_some()),
    ];
    for (name, present) in given {
        if present && !allowed.contains(&name) {
            return Err(malformed(format!("parameter `{name}` does not apply to `{id}`")));
        }
    }

    let kind = match id {
        "minkowski" => Kind::Minkowski,
        "quadratic_metric" => {
            let rows = params
                .metric
                .as_ref()
                .ok_or_else(|| malformed("quadratic_metric needs `metric`"))?;
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(malformed(format!("`metric` must be {dim}x{dim}")));
            }
            let mut metric = Vec::with_capacity(dim * dim);
            for (i, row) in rows.iter().enumerate() {
                for (j, text) in row.iter().enumerate() {
                    metric.push(parse_in(text, &base, &format!("metric[{i}][{j}]"))?);
                }
            }
            for i in 0..dim {
                for j in 0..i {
                    if metric[i * dim + j] != metric[j * dim + i] {
                        return Err(malformed(format!("`metric` is not symmetric at ({i}, {j})")));
                    }
                }
            }
            Kind::Quadratic { metric }
        }
        "affine_sphere_friedmann" => {
            if dim != 4 {
                return Err(malformed(format!(
                    "affine_sphere_friedmann requires dim = 4, got {dim}"
                )));
            }
            let text = params.a.as_deref().unwrap_or("1");
            let scale = parse_in(text, &base, "a")?;
            Kind::AffineSphere { scale }
        }
        "quartic" => {
            let sign = params.sign.unwrap_or(1.0);
            if sign != 1.0 && sign != -1.0 {
                return Err(malformed("quartic `sign` must be 1 or -1"));
            }
            let weights = match &params.weights {
                None => vec![parse_in("1", &base, "weights")?; dim],
                Some(w) if w.len() == dim => w
                    .iter()
                    .enumerate()
                    .map(|(i, t)| parse_in(t, &base, &format!("weights[{i}]")))
                    .collect::<Result<_>>()?,
                Some(w) => {
                    return Err(malformed(format!(
                        "quartic `weights` has {} entries, expected {dim}",
                        w.len()
                    )))
                }
            };
            Kind::Quartic { sign, weights }
        }
        _ => {
            let text = params
                .expr
                .as_deref()
                .ok_or_else(|| malformed("custom_expression needs `expr`"))?;
            let expr = parse_in(text, &fiber, "expr")?;
            let positive = params
                .positive
                .iter()
                .flatten()
                .enumerate()
                .map(|(i, t)| parse_in(t, &fiber, &format!("positive[{i}]")))
                .collect::<Result<_>>()?;
            Kind::Custom { expr, positive }
        }
    };

    let chart = match &params.chart {
        None => None,
        Some(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(malformed(format!("`chart` must be {dim}x{dim}")));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let m = nalgebra::DMatrix::from_row_slice(dim, dim, &flat);
            if m.determinant().abs() < 1e-12 {
                return Err(malformed("`chart` is singular"));
            }
            Some(flat)
        }
    };
    if let Some(sig) = &params.signature {
        if sig.len() != dim || sig.iter().any(|s| *s != 1 && *s != -1) {
            return Err(malformed(format!("`signature` must list {dim} entries of ±1")));
        }
    }

    Ok(LagrangianSpec {
        id: id.to_string(),
        dim,
        kind,
        params: named.clone(),
        chart,
        expected_signature: params.signature.clone().map(sorted_signs),
    })
}

fn sorted_signs(mut s: Vec<i8>) -> Vec<i8> {
    s.sort();
    s
}

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

impl LagrangianSpec {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn expected_signature(&self) -> Option<&[i8]> {
        self.expected_signature.as_deref()
    }

    /// Whether the Lagrangian is quadratic in the fiber variable.
    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, Kind::Minkowski | Kind::Quadratic { .. })
    }

    fn chart_apply<T: Scalar>(&self, v: &[Jet<T>]) -> Vec<Jet<T>> {
        match &self.chart {
            None => v.to_vec(),
            Some(a) => (0..self.dim)
                .map(|i| {
                    let mut acc = v[0].constant_like(T::zero());
                    for (j, vj) in v.iter().enumerate() {
                        let c = a[i * self.dim + j];
                        if c != 0.0 {
                            acc.axpy(T::from_f64(c).unwrap(), vj);
                        }
                    }
                    acc
                })
                .collect(),
        }
    }

    fn chart_apply_f64(&self, v: &[f64]) -> Vec<f64> {
        match &self.chart {
            None => v.to_vec(),
            Some(a) => (0..self.dim)
                .map(|i| (0..self.dim).map(|j| a[i * self.dim + j] * v[j]).sum())
                .collect(),
        }
    }

    /// Lagrangian in jet arithmetic; the jets may carry any set of active
    /// variables.
    pub fn eval_jet<T: Scalar>(&self, x: &[Jet<T>], y: &[Jet<T>]) -> Result<Jet<T>> {
        self.eval_jet_branches(x, y, &mut Vec::new())
    }

    fn eval_jet_branches<T: Scalar>(&self, x: &[Jet<T>], y: &[Jet<T>], branches: &mut Vec<i8>) -> Result<Jet<T>> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(GeometryError::Invalid(format!(
                "expected {} coordinates, got x: {}, y: {}",
                self.dim,
                x.len(),
                y.len()
            )));
        }
        let c = |v: f64| T::from_f64(v).unwrap();
        let (x, y) = (self.chart_apply(x), self.chart_apply(y));
        let half = c(0.5);
        Ok(match &self.kind {
            Kind::Minkowski => {
                let mut acc = y[0].mul(&y[0]).neg();
                for yi in &y[1..] {
                    acc = acc.add(&yi.mul(yi));
                }
                acc.scale(half)
            }
            Kind::Quadratic { metric } => {
                let mut acc = y[0].constant_like(T::zero());
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        let m = metric[i * self.dim + j].eval_jet(&x, &[], &self.params)?;
                        acc = acc.add(&m.mul(&y[i]).mul(&y[j]));
                    }
                }
                acc.scale(half)
            }
            Kind::AffineSphere { scale } => {
                let a = scale.eval_jet(&x, &[], &self.params)?;
                let az = a.mul(&y[3]);
                let alpha = y[0].scale(half).add(&az.scale(c(SQRT3_2)));
                let beta = y[0].scale(c(SQRT3_2)).sub(&az.scale(half));
                let spatial = y[1].mul(&y[1]).add(&y[2].mul(&y[2]));
                let radicand = beta.mul(&beta).sub(&a.mul(&a).mul(&spatial));
                let prefactor = -2.0 / 3f64.powf(0.75);
                alpha
                    .mul(&alpha)
                    .pow_rational(1, 4)?
                    .mul(&radicand.pow_rational(3, 4)?)
                    .scale(c(prefactor))
            }
            Kind::Quartic { sign, weights } => {
                let mut acc = y[0].constant_like(T::zero());
                for (i, w) in weights.iter().enumerate() {
                    let w = w.eval_jet(&x, &[], &self.params)?;
                    let term = w.mul(&y[i].powi(4)?);
                    acc = if i == 0 { acc.sub(&term) } else { acc.add(&term) };
                }
                acc.pow_rational(1, 2)?.scale(c(0.5 * sign))
            }
            Kind::Custom { expr, .. } => expr.eval_jet_branches(&x, &y, &self.params, branches)?,
        })
    }

    /// Plain value of the Lagrangian at an admissible point.
    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_admissible(x, y)?;
        let (xj, yj) = constant_jets(x, y)?;
        Ok(self.eval_jet(&xj, &yj)?.value())
    }

    pub fn is_admissible(&self, x: &[f64], y: &[f64]) -> bool {
        self.check_admissible(x, y).is_ok()
    }

    /// Hard admissibility check; every tensor evaluation goes through it.
    pub fn check_admissible(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let reject = |reason: String| GeometryError::Inadmissible {
            x: x.to_vec(),
            y: y.to_vec(),
            reason,
        };
        if x.len() != self.dim || y.len() != self.dim {
            return Err(reject(format!("expected {} coordinates", self.dim)));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(reject("non-finite coordinate".into()));
        }
        if y.iter().all(|&v| v == 0.0) {
            return Err(reject("zero fiber vector".into()));
        }
        let (px, py) = (self.chart_apply_f64(x), self.chart_apply_f64(y));
        let eval = |e: &Expr, with_y: bool| -> Result<f64> {
            let yy: &[f64] = if with_y { &py } else { &[] };
            let v = e
                .eval_f64(&px, yy, &self.params)
                .map_err(|err| reject(err.to_string()))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(reject(format!("`{}` is not finite", e.source())))
            }
        };
        match &self.kind {
            Kind::Minkowski => {}
            Kind::Quadratic { metric } => {
                for m in metric {
                    eval(m, false)?;
                }
            }
            Kind::AffineSphere { scale } => {
                let a = eval(scale, false)?;
                if a == 0.0 {
                    return Err(reject("scale factor vanishes".into()));
                }
                let alpha = 0.5 * py[0] + SQRT3_2 * a * py[3];
                let beta = SQRT3_2 * py[0] - 0.5 * a * py[3];
                let radicand = beta * beta - a * a * (py[1] * py[1] + py[2] * py[2]);
                if alpha == 0.0 {
                    return Err(reject("alpha = 0".into()));
                }
                if !(radicand > 0.0) {
                    return Err(reject(format!("cone radicand {radicand:e} is not positive")));
                }
            }
            Kind::Quartic { weights, .. } => {
                let mut radicand = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    let w = eval(w, false)?;
                    if !(w > 0.0) {
                        return Err(reject(format!("weight {i} is not positive")));
                    }
                    let term = w * py[i].powi(4);
                    radicand += if i == 0 { -term } else { term };
                }
                if !(radicand > 0.0) {
                    return Err(reject(format!("radicand {radicand:e} is not positive")));
                }
                if py.iter().any(|&v| v == 0.0) {
                    return Err(reject("a fiber component vanishes".into()));
                }
            }
            Kind::Custom { expr, positive } => {
                for (i, p) in positive.iter().enumerate() {
                    if !(eval(p, true)? > 0.0) {
                        return Err(reject(format!("constraint positive[{i}] fails")));
                    }
                }
                eval(expr, true)?;
                let (xj, yj) = constant_jets(&px, &py)?;
                expr.eval_jet(&xj, &yj, &self.params)
                    .map_err(|e| reject(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Label of the connected piece of the admissible cone holding `y`.
    pub fn component(&self, x: &[f64], y: &[f64]) -> Result<Vec<i8>> {
        self.check_admissible(x, y)?;
        let sgn = |v: f64| if v < 0.0 { -1 } else { 1 };
        let (px, py) = (self.chart_apply_f64(x), self.chart_apply_f64(y));
        Ok(match &self.kind {
            Kind::Minkowski | Kind::Quadratic { .. } => Vec::new(),
            Kind::AffineSphere { scale } => {
                let a = scale.eval_f64(&px, &[], &self.params)?;
                let alpha = 0.5 * py[0] + SQRT3_2 * a * py[3];
                let beta = SQRT3_2 * py[0] - 0.5 * a * py[3];
                vec![sgn(alpha), sgn(beta)]
            }
            Kind::Quartic { .. } => py.iter().map(|&v| sgn(v)).collect(),
            Kind::Custom { .. } => {
                let (xj, yj) = constant_jets(x, y)?;
                let mut branches = Vec::new();
                self.eval_jet_branches(&xj, &yj, &mut branches)?;
                branches
            }
        })
    }

    /// Euler residual `y^μ ∂L/∂y^μ - 2L`.
    pub fn homogeneity_residual(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_admissible(x, y)?;
        let n = self.dim;
        let point: Vec<f64> = x.iter().chain(y).copied().collect();
        let active: Vec<usize> = (n..2 * n).collect();
        let seeds = seed_variables(&point, &active, 1)?;
        let l = self.eval_jet(&seeds[..n], &seeds[n..])?;
        let mut euler = 0.0;
        for (mu, &ymu) in y.iter().enumerate() {
            euler += ymu * l.gradient(mu)?;
        }
        Ok(euler - 2.0 * l.value())
    }
}

/// Order-0 jets of a point, for plain evaluation through the jet path.
pub(crate) fn constant_jets(x: &[f64], y: &[f64]) -> Result<(Vec<Jet<f64>>, Vec<Jet<f64>>)> {
    let point: Vec<f64> = x.iter().chain(y).copied().collect();
    let seeds = seed_variables(&point, &[], 0)?;
    let (a, b) = seeds.split_at(x.len());
    Ok((a.to_vec(), b.to_vec()))
}
