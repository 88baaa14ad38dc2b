//! Legendre-map normals, induced boundary volumes and the two box
//! divergence theorems.
//!
//! Orientation: on a face with outward sign `σ` (`+1` upper, `-1` lower)
//! the target conormal is `ω = -σ dx^i`. Then `-g_n(n, X) > 0` for the
//! outward transverse vector `X = σ ∂_i`, the induced density `ν` is
//! positive, and the boundary term `-g_n(n, Y) ν` is the outward flux.

use nalgebra::{DMatrix, DVector};

use crate::catalog::LagrangianSpec;
use crate::connections::{divergence_rhs_terms, FiberVectorField, SectionField, SectionGeometry};
use crate::error::{GeometryError, Result};
use crate::jets::seed_variables;
use crate::quadrature::{face_rule, faces, map_points, pairwise_sum, tensor_rule, weighted_sum, Face};
use crate::report::{num, Obj, VerificationReport};
use crate::tensors::{check_nondegenerate_values, MeanCartanMethod};

/// `L`, `∂L/∂y` and the metric at one fiber point, from cheap order-2
/// jets in the fiber variables only.
#[derive(Debug, Clone)]
pub struct LocalMetric {
    pub lagrangian: f64,
    pub grad: Vec<f64>,
    pub g: Vec<f64>,
    pub ginv: Vec<f64>,
    pub det: f64,
}

impl LocalMetric {
    pub fn at(spec: &LagrangianSpec, x: &[f64], y: &[f64]) -> Result<LocalMetric> {
        spec.check_admissible(x, y)?;
        let n = spec.dim();
        let point: Vec<f64> = x.iter().chain(y).copied().collect();
        let active: Vec<usize> = (n..2 * n).collect();
        let seeds = seed_variables(&point, &active, 2)?;
        let l = spec.eval_jet(&seeds[..n], &seeds[n..])?;
        let grad = (0..n).map(|mu| l.gradient(mu)).collect::<std::result::Result<_, _>>()?;
        let mut g = vec![0.0; n * n];
        for mu in 0..n {
            for nu in 0..n {
                let mut index = vec![0; n];
                index[mu] += 1;
                index[nu] += 1;
                g[mu * n + nu] = l.extract_partial(&index)?;
            }
        }
        check_nondegenerate_values(&g, n)?;
        let m = DMatrix::from_row_slice(n, n, &g);
        let det = m.determinant();
        let inv = m.try_inverse().ok_or(GeometryError::Degenerate { ratio: 0.0 })?;
        let ginv = (0..n * n).map(|k| inv[(k / n, k % n)]).collect();
        Ok(LocalMetric {
            lagrangian: l.value(),
            grad,
            g,
            ginv,
            det,
        })
    }

    fn dim(&self) -> usize {
        self.grad.len()
    }

    /// `g_{μν} u^ν`.
    pub fn lower(&self, u: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|mu| (0..n).map(|nu| self.g[mu * n + nu] * u[nu]).sum())
            .collect()
    }

    /// `g^{μν} w_ν`.
    pub fn raise(&self, w: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|mu| (0..n).map(|nu| self.ginv[mu * n + nu] * w[nu]).sum())
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `Z^μ(x, y)` as plain numbers.
pub fn field_value(spec: &LagrangianSpec, z: &FiberVectorField, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    match z {
        FiberVectorField::Components(c) => c.iter().map(|e| Ok(e.eval_f64(x, y, spec.params())?)).collect(),
        FiberVectorField::VerticalGradient(f) => {
            let n = spec.dim();
            let point: Vec<f64> = x.iter().chain(y).copied().collect();
            let active: Vec<usize> = (n..2 * n).collect();
            let seeds = seed_variables(&point, &active, 1)?;
            let fj = f.eval_jet(&seeds[..n], &seeds[n..], spec.params())?;
            let grad: Vec<f64> = (0..n).map(|k| fj.gradient(k)).collect::<std::result::Result<_, _>>()?;
            Ok(LocalMetric::at(spec, x, y)?.raise(&grad))
        }
    }
}

/// `ℓ(v) = g_{μν}(x, v) v^ν`.
pub fn legendre_map(spec: &LagrangianSpec, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    Ok(LocalMetric::at(spec, x, v)?.lower(v))
}

/// Newton iterations allowed in [`legendre_invert`].
pub const LEGENDRE_MAX_ITERATIONS: usize = 50;
/// Convergence threshold relative to `‖ω‖`.
pub const LEGENDRE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LegendreSolution {
    pub v: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solve `ℓ(v) = ω` by Newton's method from `seed`.
///
/// The Jacobian of `ℓ` is `g(x, v)` itself (the Cartan term `2 C(v, ·)`
/// vanishes by homogeneity). Steps are halved whenever an iterate would
/// leave the admissible cone or the seed's cone component.
pub fn legendre_invert(spec: &LagrangianSpec, x: &[f64], omega: &[f64], seed: &[f64]) -> Result<LegendreSolution> {
    let n = spec.dim();
    if omega.len() != n || seed.len() != n {
        return Err(GeometryError::Invalid("covector/seed dimension mismatch".into()));
    }
    let scale = norm(omega);
    if scale == 0.0 {
        return Err(GeometryError::Precondition(
            "zero covector has no Legendre preimage".into(),
        ));
    }
    let component = spec.component(x, seed)?;
    let mut v = seed.to_vec();
    let mut metric = LocalMetric::at(spec, x, &v)?;
    for iteration in 0..=LEGENDRE_MAX_ITERATIONS {
        let f: Vec<f64> = metric.lower(&v).iter().zip(omega).map(|(a, b)| a - b).collect();
        let residual = norm(&f);
        if residual <= LEGENDRE_TOLERANCE * scale {
            return Ok(LegendreSolution {
                v,
                iterations: iteration,
                residual,
            });
        }
        if iteration == LEGENDRE_MAX_ITERATIONS {
            return Err(GeometryError::NoConvergence {
                iterations: iteration,
                residual,
                last: v,
            });
        }
        let step = metric.raise(&f);
        let mut t = 1.0;
        loop {
            let candidate: Vec<f64> = v.iter().zip(&step).map(|(a, d)| a - t * d).collect();
            let accepted = spec
                .component(x, &candidate)
                .ok()
                .filter(|c| *c == component)
                .and_then(|_| LocalMetric::at(spec, x, &candidate).ok().map(|m| (candidate, m)));
            if let Some((c, m)) = accepted {
                v = c;
                metric = m;
                break;
            }
            t *= 0.5;
            if t < 1e-9 {
                return Err(GeometryError::LeftCone { last: v });
            }
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Outward conormal `-σ dx^i` of a face.
pub fn face_conormal(face: Face, dim: usize) -> Vec<f64> {
    let mut w = vec![0.0; dim];
    w[face.axis] = -face.sigma();
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceNormal {
    pub n: Vec<f64>,
    /// `g_n(n, n)` before any rescaling.
    pub g_nn_raw: f64,
    /// Whether `n` was rescaled to `g_n(n, n) = -1`.
    pub normalized: bool,
    pub iterations: usize,
}

/// Legendre preimage of `omega`, rescaled to `g_n(n, n) = -1` when
/// `g_n(n, n) < 0` (spacelike hypersurface), otherwise kept at Newton scale.
pub fn normal_for_conormal(spec: &LagrangianSpec, x: &[f64], omega: &[f64], seed: &[f64]) -> Result<FaceNormal> {
    let sol = legendre_invert(spec, x, omega, seed)?;
    let g_nn = dot(omega, &sol.v);
    let (n, normalized) = if g_nn < 0.0 {
        let c = (-g_nn).sqrt();
        (sol.v.iter().map(|v| v / c).collect(), true)
    } else {
        (sol.v, false)
    };
    Ok(FaceNormal {
        n,
        g_nn_raw: g_nn,
        normalized,
        iterations: sol.iterations,
    })
}

pub fn face_normal(spec: &LagrangianSpec, face: Face, x: &[f64], seed: &[f64]) -> Result<FaceNormal> {
    normal_for_conormal(spec, x, &face_conormal(face, spec.dim()), seed)
}

/// `det[X, e_{j₁}, …]` over the face's coordinate frame, signed so that
/// the outward coordinate vector gives a positive value.
fn oriented_frame_det(face: Face, v: &[f64]) -> f64 {
    let n = v.len();
    let mut m = DMatrix::zeros(n, n);
    m.set_column(0, &DVector::from_column_slice(v));
    for (col, j) in (0..n).filter(|&j| j != face.axis).enumerate() {
        m[(j, col + 1)] = 1.0;
    }
    let parity = if face.axis % 2 == 0 { 1.0 } else { -1.0 };
    m.determinant() * face.sigma() * parity
}

/// Density of `ν = i_X μ / (-g_n(n, X))` on the face coordinates, with
/// `μ = mu_density dx⁰∧…` and the outward coordinate vector as default `X`.
pub fn induced_volume_weight(
    spec: &LagrangianSpec,
    n: &[f64],
    x: &[f64],
    face: Face,
    mu_density: f64,
    transverse: Option<&[f64]>,
) -> Result<f64> {
    let dim = spec.dim();
    let outward;
    let xv = match transverse {
        Some(t) => t,
        None => {
            let mut e = vec![0.0; dim];
            e[face.axis] = face.sigma();
            outward = e;
            &outward
        }
    };
    let ln = legendre_map(spec, x, n)?;
    let pairing = dot(&ln, xv);
    if pairing.abs() <= 1e-14 * norm(&ln) * norm(xv) {
        return Err(GeometryError::NotTransverse { value: pairing });
    }
    Ok(mu_density * oriented_frame_det(face, xv) / (-pairing))
}

/// Density of `i_n μ` on the face, the alternative to
/// [`induced_volume_weight`] when `g_n(n, n) = -1`.
pub fn interior_weight(n: &[f64], face: Face, mu_density: f64) -> f64 {
    mu_density * oriented_frame_det(face, n)
}

/// A coordinate box with the problem data of a divergence run.
#[derive(Debug, Clone)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<BoxDomain> {
        if lower.len() != upper.len() || lower.iter().zip(upper).any(|(a, b)| !(a < b)) {
            return Err(GeometryError::Invalid(format!(
                "box needs lower < upper componentwise (lower {lower:?}, upper {upper:?})"
            )));
        }
        Ok(BoxDomain {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn face_center(&self, face: Face) -> Vec<f64> {
        let mut c = self.center();
        c[face.axis] = if face.upper {
            self.upper[face.axis]
        } else {
            self.lower[face.axis]
        };
        c
    }

    fn uniform(&self, order: usize) -> Vec<usize> {
        vec![order; self.dim()]
    }
}

/// One refinement level of a divergence run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub order: usize,
    pub volume: f64,
    pub boundary: f64,
    /// `∫_{∂D} i_Y μ` (Finsler runs only).
    pub oracle: Option<f64>,
    /// Volume integral including the mean-Cartan term (Finsler runs only).
    pub volume_with_mean_cartan: Option<f64>,
    pub per_face: Vec<f64>,
    pub max_newton_iterations: usize,
}

impl ConvergenceRow {
    pub fn residual(&self) -> f64 {
        (self.volume - self.boundary).abs()
    }

    /// Largest pairwise difference among volume, boundary and oracle.
    pub fn max_pairwise(&self) -> f64 {
        let mut r = self.residual();
        if let Some(o) = self.oracle {
            r = r.max((self.volume - o).abs()).max((self.boundary - o).abs());
        }
        r
    }

    fn scale(&self) -> f64 {
        self.volume.abs().max(self.boundary.abs()).max(1.0)
    }
}

/// Whether `residuals` decays monotonically, treating values below the
/// noise floor as converged.
pub fn monotone_decay(residuals: &[f64], floor: f64) -> bool {
    residuals.windows(2).all(|w| w[1] <= w[0] || w[1] <= floor)
}

/// Tolerances of a divergence run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceTolerances {
    /// Pairwise agreement of the sides at the finest order.
    pub residual: f64,
    /// Applicability gate on `max|I|`.
    pub mean_cartan_gate: f64,
    /// Relative spread of `√|det g|` across fiber points.
    pub det_spread: f64,
    /// Residuals below `noise_floor · scale` count as converged.
    pub noise_floor: f64,
}

impl Default for DivergenceTolerances {
    fn default() -> Self {
        DivergenceTolerances {
            residual: 1e-7,
            mean_cartan_gate: 1e-7,
            det_spread: 1e-8,
            noise_floor: 1e-12,
        }
    }
}

/// Problem data shared by both theorems.
#[derive(Debug, Clone, Copy)]
pub struct DivergenceProblem<'a> {
    pub spec: &'a LagrangianSpec,
    pub field: &'a FiberVectorField,
    pub section: &'a SectionField,
    pub domain: &'a BoxDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceOutcome {
    pub theorem: &'static str,
    pub rows: Vec<ConvergenceRow>,
    pub max_mean_cartan: Option<f64>,
    pub det_spread: Option<f64>,
    pub forced: bool,
    pub tolerances: DivergenceTolerances,
}

impl DivergenceOutcome {
    pub fn finest(&self) -> &ConvergenceRow {
        self.rows.last().expect("at least one order")
    }

    pub fn monotone(&self) -> bool {
        let floor = self.tolerances.noise_floor * self.finest().scale();
        let r: Vec<f64> = self.rows.iter().map(ConvergenceRow::max_pairwise).collect();
        monotone_decay(&r, floor)
    }

    pub fn passed(&self) -> bool {
        let t = &self.tolerances;
        let row = self.finest();
        let gate_ok = self.max_mean_cartan.is_none_or(|m| m <= t.mean_cartan_gate);
        let det_ok = self.det_spread.is_none_or(|s| s <= t.det_spread);
        row.max_pairwise() <= t.residual * row.scale() && self.monotone() && gate_ok && det_ok
    }

    pub fn to_report(&self) -> VerificationReport {
        let mut report = VerificationReport::new(format!("divergence_{}", self.theorem));
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut o = Obj::new()
                    .set("order", r.order)
                    .num("volume", r.volume)
                    .num("boundary", r.boundary)
                    .num("residual", r.residual())
                    .nums("per_face_boundary", &r.per_face)
                    .set("max_newton_iterations", r.max_newton_iterations);
                if let Some(v) = r.oracle {
                    o = o
                        .num("oracle_boundary", v)
                        .num("residual_volume_oracle", (r.volume - v).abs())
                        .num("residual_boundary_oracle", (r.boundary - v).abs());
                }
                if let Some(v) = r.volume_with_mean_cartan {
                    o = o.num("volume_with_mean_cartan", v);
                }
                o.into()
            })
            .collect();
        let t = &self.tolerances;
        report.payload = Obj::new()
            .set("convergence", rows)
            .set("monotone_decay", self.monotone())
            .set(
                "max_mean_cartan",
                self.max_mean_cartan.map_or(serde_json::Value::Null, num),
            )
            .set("det_spread", self.det_spread.map_or(serde_json::Value::Null, num))
            .set(
                "tolerances",
                Obj::new()
                    .num("residual", t.residual)
                    .num("mean_cartan_gate", t.mean_cartan_gate)
                    .num("det_spread", t.det_spread)
                    .num("noise_floor", t.noise_floor),
            )
            .into();
        report.passed = self.passed();
        report.forced = self.forced;
        report
    }
}

/// Volume integrand pieces at one node: `(horizontal + chain, mean-Cartan
/// term, √|det g|, max|I|)`.
fn volume_terms(p: &DivergenceProblem, x: &[f64]) -> Result<[f64; 4]> {
    let sg = SectionGeometry::new(p.spec, p.section, x, 3)?;
    let (horizontal, mean_cartan, chain) = divergence_rhs_terms(&sg, p.field)?;
    let i_max = sg.fiber.mean_cartan_torsion(MeanCartanMethod::Contract).max_abs();
    Ok([horizontal + chain, mean_cartan, sg.fiber.volume_density(), i_max])
}

/// Rund's theorem: `∫_D s*(div-formula) μ(s*g)` against the flux through
/// `∂D` with the `s*g`-unit normal and the `s*g`-induced area.
pub fn verify_divergence_rund(
    p: &DivergenceProblem,
    orders: &[usize],
    tol: DivergenceTolerances,
) -> Result<DivergenceOutcome> {
    check_problem(p, orders)?;
    let dim = p.spec.dim();
    let mut rows = Vec::new();
    for &q in orders {
        let (pts, w) = tensor_rule(&p.domain.lower, &p.domain.upper, &p.domain.uniform(q));
        let terms = map_points(&pts, |x| volume_terms(p, x))?;
        let integrand: Vec<f64> = terms.iter().map(|t| (t[0] + t[1]) * t[2]).collect();
        let volume = weighted_sum(&integrand, &w);

        let mut per_face = Vec::new();
        for face in faces(dim) {
            let (fpts, fw) = face_rule(&p.domain.lower, &p.domain.upper, &p.domain.uniform(q), face);
            let vals = map_points(&fpts, |x| rund_boundary_term(p, face, x))?;
            per_face.push(weighted_sum(&vals, &fw));
        }
        rows.push(ConvergenceRow {
            order: q,
            volume,
            boundary: pairwise_sum(&per_face),
            oracle: None,
            volume_with_mean_cartan: None,
            per_face,
            max_newton_iterations: 0,
        });
    }
    Ok(DivergenceOutcome {
        theorem: "rund",
        rows,
        max_mean_cartan: None,
        det_spread: None,
        forced: false,
        tolerances: tol,
    })
}

/// `-h(n̂, Y) ν^R` with `h = s*g`, `n̂` the `h`-unit normal to the face and
/// `ν^R` the `h`-area density of the face.
fn rund_boundary_term(p: &DivergenceProblem, face: Face, x: &[f64]) -> Result<f64> {
    let n = p.spec.dim();
    let s = p.section.value(x, p.spec.params())?;
    let h = LocalMetric::at(p.spec, x, &s)?;
    let y = field_value(p.spec, p.field, x, &s)?;
    let omega = face_conormal(face, n);
    let normal = h.raise(&omega);
    let hnn = dot(&omega, &normal);
    if hnn == 0.0 {
        return Err(GeometryError::NotTransverse { value: hnn });
    }
    let unit: Vec<f64> = normal.iter().map(|v| v / hnn.abs().sqrt()).collect();
    let keep: Vec<usize> = (0..n).filter(|&j| j != face.axis).collect();
    let face_metric = DMatrix::from_fn(n - 1, n - 1, |a, b| h.g[keep[a] * n + keep[b]]);
    let area = face_metric.determinant().abs().sqrt();
    Ok(-dot(&h.lower(&unit), &y) * area)
}

fn check_problem(p: &DivergenceProblem, orders: &[usize]) -> Result<()> {
    let n = p.spec.dim();
    if p.section.dim() != n || p.domain.dim() != n {
        return Err(GeometryError::Invalid(
            "section/domain dimension differs from the Lagrangian's".into(),
        ));
    }
    if orders.is_empty() || orders.contains(&0) {
        return Err(GeometryError::Invalid("quadrature orders must be positive".into()));
    }
    Ok(())
}

/// Options of the Finslerian theorem run.
#[derive(Debug, Clone, Default)]
pub struct FinslerOptions {
    /// Newton seed per face in [`faces`] order; `None` for the default.
    pub seeds: Option<Vec<Vec<f64>>>,
    /// Scale applied to seeds and target conormals.
    pub seed_scale: Option<f64>,
    /// Run past a failed applicability gate.
    pub force: bool,
}

/// Default seed: `g⁻¹ ω` with the metric at the face center and section value.
pub fn default_face_seed(
    spec: &LagrangianSpec,
    section: &SectionField,
    domain: &BoxDomain,
    face: Face,
) -> Result<Vec<f64>> {
    let c = domain.face_center(face);
    let s = section.value(&c, spec.params())?;
    Ok(LocalMetric::at(spec, &c, &s)?.raise(&face_conormal(face, spec.dim())))
}

/// Relative spread of `√|det g(x, ·)|` over `s(x)` and perturbed fiber points.
pub fn det_spread_at(spec: &LagrangianSpec, x: &[f64], s: &[f64]) -> Result<f64> {
    let n = spec.dim();
    let base = LocalMetric::at(spec, x, s)?.det.abs().sqrt();
    let size = norm(s);
    let mut values = vec![base];
    let mut fibers = vec![s.iter().map(|v| 1.7 * v).collect::<Vec<_>>()];
    for k in [1, n - 1] {
        let mut eps = 0.1;
        loop {
            let mut y = s.to_vec();
            y[k] += eps * size;
            if LocalMetric::at(spec, x, &y).is_ok() || eps < 1e-4 {
                fibers.push(y);
                break;
            }
            eps *= 0.5;
        }
    }
    for y in &fibers {
        values.push(LocalMetric::at(spec, x, y)?.det.abs().sqrt());
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    Ok((hi - lo) / hi)
}

/// The Finslerian divergence theorem on a box: volume side, Legendre-normal
/// boundary side and the `∫ i_Y μ` oracle.
pub fn verify_divergence_finsler(
    p: &DivergenceProblem,
    orders: &[usize],
    opts: &FinslerOptions,
    tol: DivergenceTolerances,
) -> Result<DivergenceOutcome> {
    check_problem(p, orders)?;
    let dim = p.spec.dim();
    let face_list = faces(dim);
    let scale = opts.seed_scale.unwrap_or(1.0);
    if !(scale > 0.0) {
        return Err(GeometryError::Invalid("seed scale must be positive".into()));
    }
    let seeds: Vec<Vec<f64>> = match &opts.seeds {
        Some(s) if s.len() == face_list.len() && s.iter().all(|v| v.len() == dim) => s.clone(),
        Some(_) => {
            return Err(GeometryError::Invalid(format!(
                "expected {} face seeds of dimension {dim}",
                face_list.len()
            )))
        }
        None => face_list
            .iter()
            .map(|&f| default_face_seed(p.spec, p.section, p.domain, f))
            .collect::<Result<_>>()?,
    };
    let seeds: Vec<Vec<f64>> = seeds.iter().map(|v| v.iter().map(|c| c * scale).collect()).collect();

    let mut rows = Vec::new();
    let mut max_i: f64 = 0.0;
    let mut spread: f64 = 0.0;
    for (level, &q) in orders.iter().enumerate() {
        let (pts, w) = tensor_rule(&p.domain.lower, &p.domain.upper, &p.domain.uniform(q));
        let terms = map_points(&pts, |x| volume_terms(p, x))?;
        max_i = terms.iter().fold(max_i, |m, t| m.max(t[3]));
        if level == 0 {
            if max_i > tol.mean_cartan_gate && !opts.force {
                return Err(GeometryError::GateRefused(format!(
                    "max|I| = {max_i:e} exceeds {:e}; the theorem needs vanishing mean Cartan torsion",
                    tol.mean_cartan_gate
                )));
            }
            let spreads = map_points(&pts, |x| {
                let s = p.section.value(x, p.spec.params())?;
                det_spread_at(p.spec, x, &s)
            })?;
            spread = spreads.into_iter().fold(0.0, f64::max);
        }
        let plain: Vec<f64> = terms.iter().map(|t| t[0] * t[2]).collect();
        let full: Vec<f64> = terms.iter().map(|t| (t[0] + t[1]) * t[2]).collect();
        let volume = weighted_sum(&plain, &w);
        let volume_with_mean_cartan = weighted_sum(&full, &w);

        let mut per_face = Vec::new();
        let mut oracle_faces = Vec::new();
        let mut newton_max = 0;
        for (face, seed) in face_list.iter().zip(&seeds) {
            let (fpts, fw) = face_rule(&p.domain.lower, &p.domain.upper, &p.domain.uniform(q), *face);
            let vals = map_points(&fpts, |x| finsler_boundary_terms(p, *face, x, seed, scale))?;
            let legendre: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let oracle: Vec<f64> = vals.iter().map(|v| v.1).collect();
            newton_max = vals.iter().fold(newton_max, |m, v| m.max(v.2));
            per_face.push(weighted_sum(&legendre, &fw));
            oracle_faces.push(weighted_sum(&oracle, &fw));
        }
        rows.push(ConvergenceRow {
            order: q,
            volume,
            boundary: pairwise_sum(&per_face),
            oracle: Some(pairwise_sum(&oracle_faces)),
            volume_with_mean_cartan: Some(volume_with_mean_cartan),
            per_face,
            max_newton_iterations: newton_max,
        });
    }
    Ok(DivergenceOutcome {
        theorem: "finsler",
        rows,
        max_mean_cartan: Some(max_i),
        det_spread: Some(spread),
        forced: opts.force && max_i > tol.mean_cartan_gate,
        tolerances: tol,
    })
}

/// `(-g_n(n, Y) ν, i_Y μ, Newton iterations)` at a face node.
fn finsler_boundary_terms(
    p: &DivergenceProblem,
    face: Face,
    x: &[f64],
    seed: &[f64],
    scale: f64,
) -> Result<(f64, f64, usize)> {
    let dim = p.spec.dim();
    let s = p.section.value(x, p.spec.params())?;
    let mu = LocalMetric::at(p.spec, x, &s)?.det.abs().sqrt();
    let y = field_value(p.spec, p.field, x, &s)?;
    let omega: Vec<f64> = face_conormal(face, dim).iter().map(|w| w * scale).collect();
    let normal = normal_for_conormal(p.spec, x, &omega, seed)?;
    let nu = induced_volume_weight(p.spec, &normal.n, x, face, mu, None)?;
    let ln = legendre_map(p.spec, x, &normal.n)?;
    let legendre = -dot(&ln, &y) * nu;
    let oracle = face.sigma() * y[face.axis] * mu;
    Ok((legendre, oracle, normal.iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_lagrangian, LagrangianParams};
    use crate::expr::Params;
    use approx::assert_relative_eq;

    fn minkowski() -> LagrangianSpec {
        build_lagrangian("minkowski", 4, &LagrangianParams::default(), &Params::new()).unwrap()
    }

    #[test]
    fn minkowski_legendre() {
        let spec = minkowski();
        let w = legendre_map(&spec, &[0.0; 4], &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(w, vec![-1.0, 0.0, 0.0, 0.0]);
        let v = legendre_invert(&spec, &[0.0; 4], &[-1.0, 0.0, 0.0, 0.0], &[0.9, 0.0, 0.0, 0.0]).unwrap();
        for (a, b) in v.v.iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn minkowski_time_face() {
        let spec = minkowski();
        let face = Face { axis: 0, upper: true };
        let n = face_normal(&spec, face, &[1.0, 0.2, 0.3, 0.4], &[1.0, 0.1, 0.0, 0.0]).unwrap();
        assert!(n.normalized);
        assert_relative_eq!(n.n[0], 1.0, epsilon = 1e-14);
        let w = induced_volume_weight(&spec, &n.n, &[1.0; 4], face, 1.0, None).unwrap();
        assert_relative_eq!(w, 1.0, epsilon = 1e-14);
        assert_relative_eq!(interior_weight(&n.n, face, 1.0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn induced_weight_scaling_and_transversal_independence() {
        let spec = minkowski();
        let face = Face { axis: 2, upper: false };
        let x = [0.0; 4];
        let n = face_normal(&spec, face, &x, &[0.0, 0.0, -1.0, 0.0]).unwrap();
        assert!(!n.normalized);
        let w = induced_volume_weight(&spec, &n.n, &x, face, 1.3, None).unwrap();
        let tilted = [0.4, -0.2, -1.0, 0.7];
        let w2 = induced_volume_weight(&spec, &n.n, &x, face, 1.3, Some(&tilted)).unwrap();
        assert_relative_eq!(w, w2, epsilon = 1e-12);
        let n3: Vec<f64> = n.n.iter().map(|v| 3.0 * v).collect();
        let w3 = induced_volume_weight(&spec, &n3, &x, face, 1.3, None).unwrap();
        assert_relative_eq!(w3, w / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rund_flux_of_linear_field() {
        let spec = minkowski();
        let params = Params::new();
        let z = FiberVectorField::components(&["x1", "0", "0", "0"], 4, &params).unwrap();
        // the sample field in the flux example moves along the x1 axis
        let z1 = FiberVectorField::components(&["0", "x1", "0", "0"], 4, &params).unwrap();
        let s = SectionField::parse("s", &["1", "0.1", "0", "0"], 4, &params).unwrap();
        let domain = BoxDomain::new(&[0.0; 4], &[1.0; 4]).unwrap();
        for (field, expected) in [(&z, 0.0), (&z1, 1.0)] {
            let p = DivergenceProblem {
                spec: &spec,
                field,
                section: &s,
                domain: &domain,
            };
            let out = verify_divergence_rund(&p, &[2], DivergenceTolerances::default()).unwrap();
            assert_relative_eq!(out.finest().volume, expected, epsilon = 1e-13);
            assert_relative_eq!(out.finest().boundary, expected, epsilon = 1e-13);
        }
    }
}
