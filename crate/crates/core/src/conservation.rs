//! Killing fields, pregeodesic sections and the conserved energy of a
//! horizontally divergence-free vertical gradient.
//!
//! The energy of a coordinate slice `{x^k = c}` is `E = ∫ g_n(n, s*Z) ν`
//! with `n` the Legendre preimage of `+dx^k`, normalized when timelike,
//! and `ν` the induced density of [`crate::integration`]. On a slab
//! `c₀ ≤ x^k ≤ c₁` the divergence theorem closes the budget
//! `E(c₁) − E(c₀) + F_lateral = ∫_slab (volume integrand)`, where
//! `F_lateral` is the outward flux through the remaining faces.

use crate::catalog::LagrangianSpec;
use crate::connections::{
    divergence_rhs_terms, horizontal_div, FiberVectorField, HorizontalConnection, PullbackJets, SectionField,
    SectionGeometry,
};
use crate::error::{GeometryError, Result};
use crate::expr::Expr;
use crate::integration::{
    face_conormal, field_value, induced_volume_weight, legendre_map, normal_for_conormal, BoxDomain, LocalMetric,
};
use crate::quadrature::{face_rule, faces, map_points, pairwise_sum, tensor_rule, weighted_sum, Face};
use crate::report::{num, Obj, VerificationReport};
use crate::tensors::{FiberGeometry, FiberPoint, MeanCartanMethod, TensorBlock, Valence};

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `g_{δβ}∇_γ s^β + g_{γβ}∇_δ s^β + 2 y^β (∇_β s^μ) C_{γδμ}` at `(x, y)`,
/// with `s` lifted as a `y`-independent field and `∇ = ∇^{HC}`.
pub fn killing_tensor(spec: &LagrangianSpec, s: &SectionField, p: &FiberPoint) -> Result<TensorBlock> {
    let n = spec.dim();
    let geo = FiberGeometry::new(spec, &p.x, &p.y, 3)?;
    let (sv, ds) = s.value_and_jacobian(&p.x, spec.params())?;
    let gamma = geo.chern_rund_coeffs();
    // ∇_γ s^β at [β n + γ]
    let mut cov = ds;
    for beta in 0..n {
        for g in 0..n {
            cov[beta * n + g] += (0..n).map(|mu| gamma.get(&[beta, mu, g]) * sv[mu]).sum::<f64>();
        }
    }
    let metric = geo.metric();
    let c = geo.cartan_torsion();
    let mut out = vec![0.0; n * n];
    for g in 0..n {
        for d in 0..n {
            let mut v = 0.0;
            for b in 0..n {
                v += metric.get(&[d, b]) * cov[b * n + g] + metric.get(&[g, b]) * cov[b * n + d];
                for mu in 0..n {
                    v += 2.0 * p.y[b] * cov[mu * n + b] * c.get(&[g, d, mu]);
                }
            }
            out[g * n + d] = v;
        }
    }
    Ok(TensorBlock::new(n, vec![Valence::Down, Valence::Down], out, p.clone()))
}

pub fn killing_residual(spec: &LagrangianSpec, s: &SectionField, p: &FiberPoint) -> Result<f64> {
    Ok(killing_tensor(spec, s, p)?.max_abs())
}

/// `D^γ s^δ + D^δ s^γ + 2 (D_s s^μ) C^{γδ}_μ` at the support point.
pub fn evaluated_killing_tensor(sg: &SectionGeometry) -> TensorBlock {
    let n = sg.dim();
    let gi = sg.fiber.inverse_metric();
    let c = sg.fiber.cartan_torsion();
    let dss = sg.d_along_s();
    // D^γ s^δ at [γ n + δ]
    let mut raised = vec![0.0; n * n];
    for g in 0..n {
        for d in 0..n {
            raised[g * n + d] = (0..n).map(|a| gi.get(&[g, a]) * sg.d(d, a)).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for g in 0..n {
        for d in 0..n {
            let mut v = raised[g * n + d] + raised[d * n + g];
            for a in 0..n {
                for b in 0..n {
                    let cab: f64 = (0..n).map(|mu| c.get(&[a, b, mu]) * dss[mu]).sum();
                    v += 2.0 * gi.get(&[g, a]) * gi.get(&[d, b]) * cab;
                }
            }
            out[g * n + d] = v;
        }
    }
    TensorBlock::new(n, vec![Valence::Up, Valence::Up], out, sg.fiber.point().clone())
}

pub fn evaluated_killing_residual(spec: &LagrangianSpec, s: &SectionField, x: &[f64]) -> Result<f64> {
    let sg = SectionGeometry::new(spec, s, x, 3)?;
    Ok(evaluated_killing_tensor(&sg).max_abs())
}

/// `min_λ ‖D_s s − λ s‖ / (‖D_s s‖ + ‖s‖)` in chart components.
pub fn pregeodesic_defect_at(sg: &SectionGeometry) -> Result<f64> {
    let s = sg.s();
    let v = sg.d_along_s();
    let ss: f64 = s.iter().map(|a| a * a).sum();
    if ss == 0.0 {
        return Err(GeometryError::Precondition("section vanishes".into()));
    }
    let lambda = v.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() / ss;
    let rest: f64 = v
        .iter()
        .zip(s)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt();
    let vn: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(rest / (vn + ss.sqrt()))
}

pub fn pregeodesic_defect(spec: &LagrangianSpec, s: &SectionField, x: &[f64]) -> Result<f64> {
    pregeodesic_defect_at(&SectionGeometry::new(spec, s, x, 3)?)
}

/// The three forms of `s*(∂Z^μ/∂y^δ) D_μ s^δ` for `Z` the raised vertical
/// gradient of `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HudTerms {
    /// `∂Z^μ/∂y^δ D_μ s^δ`.
    pub chain: f64,
    /// `(∂Z_γ/∂y^δ − 2 C^ν_{γδ} Z_ν) D^γ s^δ`.
    pub lowered: f64,
    /// `−(∂Z_γ/∂y^δ − 2 C^ν_{γδ} Z_ν) C^{γδ}_μ D_s s^μ`.
    pub killing_form: f64,
    pub killing_residual: f64,
    pub pregeodesic_defect: f64,
}

impl HudTerms {
    /// Largest disagreement along the chain of equalities.
    pub fn residual(&self) -> f64 {
        (self.chain - self.lowered)
            .abs()
            .max((self.lowered - self.killing_form).abs())
    }
}

/// Killing threshold required before the chain is assembled.
pub const HUD_KILLING_TOLERANCE: f64 = 1e-8;

pub fn hud_terms(spec: &LagrangianSpec, f: &Expr, s: &SectionField, x: &[f64]) -> Result<HudTerms> {
    let n = spec.dim();
    let sg = SectionGeometry::new(spec, s, x, 3)?;
    let killing = evaluated_killing_tensor(&sg).max_abs();
    if killing > HUD_KILLING_TOLERANCE {
        return Err(GeometryError::Precondition(format!(
            "section is not Killing at the support point (residual {killing:e})"
        )));
    }
    let geo = &sg.fiber;
    let z = FiberVectorField::VerticalGradient(f.clone()).eval_at(geo)?;
    let fj = f.eval_jet(geo.x_jets(), geo.y_jets(), spec.params())?;
    let lower_z: Vec<_> = (0..n)
        .map(|g| fj.derivative(n + g))
        .collect::<std::result::Result<_, _>>()?;
    let gi = geo.inverse_metric();
    let c = geo.cartan_torsion();
    let cm = sg.cartan_mixed();
    let dss = sg.d_along_s();

    let mut chain = 0.0;
    for mu in 0..n {
        for d in 0..n {
            chain += z[mu].gradient(n + d)? * sg.d(d, mu);
        }
    }
    // bracket B_{γδ} = ∂Z_γ/∂y^δ − 2 C^ν_{γδ} Z_ν
    let mut bracket = vec![0.0; n * n];
    for g in 0..n {
        for d in 0..n {
            let cz: f64 = (0..n).map(|nu| cm[(nu * n + g) * n + d] * lower_z[nu].value()).sum();
            bracket[g * n + d] = lower_z[g].gradient(n + d)? - 2.0 * cz;
        }
    }
    let mut lowered = 0.0;
    let mut killing_form = 0.0;
    for g in 0..n {
        for d in 0..n {
            let raised: f64 = (0..n).map(|a| gi.get(&[g, a]) * sg.d(d, a)).sum();
            lowered += bracket[g * n + d] * raised;
            let mut c_up = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let cd: f64 = (0..n).map(|mu| c.get(&[a, b, mu]) * dss[mu]).sum();
                    c_up += gi.get(&[g, a]) * gi.get(&[d, b]) * cd;
                }
            }
            killing_form -= bracket[g * n + d] * c_up;
        }
    }
    Ok(HudTerms {
        chain,
        lowered,
        killing_form,
        killing_residual: killing,
        pregeodesic_defect: pregeodesic_defect_at(&sg)?,
    })
}

pub fn hud_residual(spec: &LagrangianSpec, f: &Expr, s: &SectionField, x: &[f64]) -> Result<f64> {
    Ok(hud_terms(spec, f, s, x)?.residual())
}

/// A coordinate slice `{x^axis = level}` over the other axes of a box.
#[derive(Debug, Clone)]
pub struct SliceSpec {
    pub axis: usize,
    pub level: f64,
    /// Box whose non-`axis` extents bound the slice.
    pub extent: BoxDomain,
    /// Newton seed for the normal of `+dx^axis`.
    pub seed: Vec<f64>,
}

/// `g_n(n, Y) ν` at a slice node, with `n` the preimage of `+dx^axis`.
fn energy_density(
    spec: &LagrangianSpec,
    z: &FiberVectorField,
    s: &SectionField,
    face: Face,
    x: &[f64],
    seed: &[f64],
) -> Result<f64> {
    let sv = s.value(x, spec.params())?;
    let mu = LocalMetric::at(spec, x, &sv)?.det.abs().sqrt();
    let y = field_value(spec, z, x, &sv)?;
    let normal = normal_for_conormal(spec, x, &face_conormal(face, spec.dim()), seed)?;
    let nu = induced_volume_weight(spec, &normal.n, x, face, mu, None)?;
    let ln = legendre_map(spec, x, &normal.n)?;
    Ok(ln.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() * nu)
}

pub fn conserved_energy(
    spec: &LagrangianSpec,
    z: &FiberVectorField,
    s: &SectionField,
    slice: &SliceSpec,
    order: usize,
) -> Result<f64> {
    let mut lower = slice.extent.lower.clone();
    let mut upper = slice.extent.upper.clone();
    lower[slice.axis] = slice.level;
    upper[slice.axis] = slice.level + 1.0;
    let face = Face {
        axis: slice.axis,
        upper: false,
    };
    let orders = vec![order; spec.dim()];
    let (pts, w) = face_rule(&lower, &upper, &orders, face);
    let vals = map_points(&pts, |x| energy_density(spec, z, s, face, x, &slice.seed))?;
    Ok(weighted_sum(&vals, &w))
}

/// Thresholds of the energy experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTolerances {
    /// Each audited hypothesis must stay below this.
    pub hypothesis: f64,
    /// Allowed closed-budget drift.
    pub drift: f64,
}

impl Default for EnergyTolerances {
    fn default() -> Self {
        EnergyTolerances {
            hypothesis: 1e-7,
            drift: 1e-7,
        }
    }
}

/// Maxima of the audited hypotheses over the sampled nodes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HypothesisAudit {
    pub mean_cartan: f64,
    pub horizontal_divergence: f64,
    pub killing: f64,
    pub pregeodesic: f64,
}

impl HypothesisAudit {
    pub fn entries(&self) -> [(&'static str, f64); 4] {
        [
            ("mean_cartan", self.mean_cartan),
            ("horizontal_divergence", self.horizontal_divergence),
            ("killing", self.killing),
            ("pregeodesic", self.pregeodesic),
        ]
    }

    pub fn violations(&self, tol: f64) -> Vec<&'static str> {
        self.entries()
            .iter()
            .filter(|(_, v)| !(*v <= tol))
            .map(|(k, _)| *k)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub order: usize,
    pub energy0: f64,
    pub energy1: f64,
    /// Outward flux through the faces other than the two slices.
    pub lateral: f64,
    /// `∫_slab` of the volume integrand.
    pub volume: f64,
}

impl DriftRow {
    pub fn raw_drift(&self) -> f64 {
        (self.energy1 - self.energy0).abs()
    }

    /// `|E₁ − E₀ + F_lateral|`: the energy change not accounted for by flux
    /// through the lateral faces.
    pub fn drift(&self) -> f64 {
        (self.energy1 - self.energy0 + self.lateral).abs()
    }

    /// Closure of the divergence-theorem budget on the slab.
    pub fn budget_residual(&self) -> f64 {
        (self.energy1 - self.energy0 + self.lateral - self.volume).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftOutcome {
    pub axis: usize,
    pub levels: (f64, f64),
    pub audit: HypothesisAudit,
    pub violations: Vec<&'static str>,
    pub forced: bool,
    pub rows: Vec<DriftRow>,
    pub tolerances: EnergyTolerances,
}

impl DriftOutcome {
    pub fn finest(&self) -> &DriftRow {
        self.rows.last().expect("at least one order")
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.finest().drift() <= self.tolerances.drift
    }

    pub fn to_report(&self) -> VerificationReport {
        let mut report = VerificationReport::new("energy_two_slice");
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                Obj::new()
                    .set("order", r.order)
                    .num("energy_slice0", r.energy0)
                    .num("energy_slice1", r.energy1)
                    .num("lateral_flux", r.lateral)
                    .num("volume_integral", r.volume)
                    .num("raw_drift", r.raw_drift())
                    .num("drift", r.drift())
                    .num("budget_residual", r.budget_residual())
                    .into()
            })
            .collect();
        let mut audit = Obj::new();
        for (k, v) in self.audit.entries() {
            audit.insert(k, num(v));
        }
        report.payload = Obj::new()
            .set("axis", self.axis)
            .nums("levels", &[self.levels.0, self.levels.1])
            .set("hypothesis_audit", audit)
            .set(
                "violations",
                self.violations.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            )
            .set("convergence", rows)
            .set(
                "tolerances",
                Obj::new()
                    .num("hypothesis", self.tolerances.hypothesis)
                    .num("drift", self.tolerances.drift),
            )
            .into();
        report.passed = self.passed();
        report.forced = self.forced;
        report
    }
}

/// Problem data of the energy experiment.
#[derive(Debug, Clone)]
pub struct EnergyProblem<'a> {
    pub spec: &'a LagrangianSpec,
    pub field: &'a FiberVectorField,
    pub section: &'a SectionField,
    /// The slab; its extent along `axis` gives the two slice levels.
    pub slab: &'a BoxDomain,
    pub axis: usize,
    /// Newton seeds for the `+dx^axis` normal and for every lateral face
    /// (in [`faces`] order, slice faces skipped); defaults when `None`.
    pub slice_seed: Option<Vec<f64>>,
    pub lateral_seeds: Option<Vec<Vec<f64>>>,
}

fn audit_node(p: &EnergyProblem, x: &[f64]) -> Result<HypothesisAudit> {
    let sg = SectionGeometry::new(p.spec, p.section, x, 3)?;
    let z = p.field.eval_at(&sg.fiber)?;
    Ok(HypothesisAudit {
        mean_cartan: sg.fiber.mean_cartan_torsion(MeanCartanMethod::Contract).max_abs(),
        horizontal_divergence: horizontal_div(&sg.fiber, &z, HorizontalConnection::ChernRund)?.abs(),
        killing: evaluated_killing_tensor(&sg).max_abs(),
        pregeodesic: pregeodesic_defect_at(&sg)?,
    })
}

fn volume_node(p: &EnergyProblem, x: &[f64]) -> Result<f64> {
    let sg = SectionGeometry::new(p.spec, p.section, x, 3)?;
    let (horizontal, _, chain) = divergence_rhs_terms(&sg, p.field)?;
    Ok((horizontal + chain) * sg.fiber.volume_density())
}

fn seed_for(p: &EnergyProblem, x: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
    let s = p.section.value(x, p.spec.params())?;
    Ok(LocalMetric::at(p.spec, x, &s)?.raise(omega))
}

/// Energies on the two bounding slices of the slab, the lateral flux, the
/// volume integral and the hypothesis audit.
pub fn two_slice_drift(
    p: &EnergyProblem,
    orders: &[usize],
    tol: EnergyTolerances,
    force: bool,
) -> Result<DriftOutcome> {
    let n = p.spec.dim();
    if p.axis >= n || p.slab.dim() != n || orders.is_empty() || orders.contains(&0) {
        return Err(GeometryError::Invalid(
            "slab, axis or orders do not match the dimension".into(),
        ));
    }
    let (lo, hi) = (p.slab.lower[p.axis], p.slab.upper[p.axis]);
    let slice_face = Face {
        axis: p.axis,
        upper: false,
    };
    let center = p.slab.face_center(slice_face);
    let slice_seed = match &p.slice_seed {
        Some(s) => s.clone(),
        None => seed_for(p, &center, &face_conormal(slice_face, n))?,
    };
    let lateral: Vec<Face> = faces(n).into_iter().filter(|f| f.axis != p.axis).collect();
    let lateral_seeds = match &p.lateral_seeds {
        Some(s) if s.len() == lateral.len() => s.clone(),
        Some(_) => {
            return Err(GeometryError::Invalid(format!(
                "expected {} lateral seeds",
                lateral.len()
            )));
        }
        None => lateral
            .iter()
            .map(|&f| seed_for(p, &p.slab.face_center(f), &face_conormal(f, n)))
            .collect::<Result<_>>()?,
    };

    let first = vec![orders[0]; n];
    let (pts, _) = tensor_rule(&p.slab.lower, &p.slab.upper, &first);
    let audits = map_points(&pts, |x| audit_node(p, x))?;
    let audit = audits.iter().fold(HypothesisAudit::default(), |a, b| HypothesisAudit {
        mean_cartan: a.mean_cartan.max(b.mean_cartan),
        horizontal_divergence: a.horizontal_divergence.max(b.horizontal_divergence),
        killing: a.killing.max(b.killing),
        pregeodesic: a.pregeodesic.max(b.pregeodesic),
    });
    let violations = audit.violations(tol.hypothesis);
    if !violations.is_empty() && !force {
        return Err(GeometryError::GateRefused(format!(
            "hypothesis audit failed for {violations:?} (tolerance {:e})",
            tol.hypothesis
        )));
    }

    let mut rows = Vec::new();
    for &q in orders {
        let qs = vec![q; n];
        let energy = |level: f64| {
            let slice = SliceSpec {
                axis: p.axis,
                level,
                extent: p.slab.clone(),
                seed: slice_seed.clone(),
            };
            conserved_energy(p.spec, p.field, p.section, &slice, q)
        };
        let (e0, e1) = (energy(lo)?, energy(hi)?);
        let mut lateral_flux = Vec::new();
        for (face, seed) in lateral.iter().zip(&lateral_seeds) {
            let (fpts, fw) = face_rule(&p.slab.lower, &p.slab.upper, &qs, *face);
            let vals = map_points(&fpts, |x| {
                // outward flux −g_n(n, Y) ν
                energy_density(p.spec, p.field, p.section, *face, x, seed).map(|v| -v)
            })?;
            lateral_flux.push(weighted_sum(&vals, &fw));
        }
        let (vpts, vw) = tensor_rule(&p.slab.lower, &p.slab.upper, &qs);
        let vvals = map_points(&vpts, |x| volume_node(p, x))?;
        rows.push(DriftRow {
            order: q,
            energy0: e0,
            energy1: e1,
            lateral: pairwise_sum(&lateral_flux),
            volume: weighted_sum(&vvals, &vw),
        });
    }
    Ok(DriftOutcome {
        axis: p.axis,
        levels: (lo, hi),
        audit,
        forced: force && !violations.is_empty(),
        violations,
        rows,
        tolerances: tol,
    })
}

/// Per-point quantities of the normalized-Killing argument.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedKillingSample {
    pub x: Vec<f64>,
    /// `g_s(s, s) + 1`.
    pub normalization: f64,
    pub killing: f64,
    /// `‖D_s s‖`.
    pub acceleration: f64,
    /// `max_γ |2 g_s(D_s s, ∂_γ) + ∂_γ g_s(s, s)|`.
    pub identity: f64,
}

pub fn normalized_killing_sample(
    spec: &LagrangianSpec,
    s: &SectionField,
    x: &[f64],
) -> Result<NormalizedKillingSample> {
    let sg = SectionGeometry::new(spec, s, x, 3)?;
    let pb = PullbackJets::new(spec, s, x, 3)?;
    let norm = 2.0 * sg.fiber.lagrangian_jet().value();
    let dss = sg.d_along_s();
    let g = sg.fiber.metric();
    let n = spec.dim();
    let d_norm = pb.d_norm()?;
    let identity = (0..n)
        .map(|c| (2.0 * (0..n).map(|a| g.get(&[c, a]) * dss[a]).sum::<f64>() + d_norm[c]).abs())
        .fold(0.0, f64::max);
    Ok(NormalizedKillingSample {
        x: x.to_vec(),
        normalization: norm + 1.0,
        killing: evaluated_killing_tensor(&sg).max_abs(),
        acceleration: dss.iter().map(|v| v * v).sum::<f64>().sqrt(),
        identity,
    })
}

/// Checks that a normalized Killing section is geodesic at the samples.
pub fn normalized_killing_is_geodesic(
    spec: &LagrangianSpec,
    s: &SectionField,
    points: &[Vec<f64>],
) -> Result<VerificationReport> {
    let samples = map_points(points, |x| normalized_killing_sample(spec, s, x))?;
    let worst = |f: fn(&NormalizedKillingSample) -> f64| max_abs(&samples.iter().map(f).collect::<Vec<_>>());
    let normalization = worst(|k| k.normalization);
    if normalization > 1e-10 {
        return Err(GeometryError::Precondition(format!(
            "section is not normalized: max |g_s(s,s) + 1| = {normalization:e}"
        )));
    }
    let killing = worst(|k| k.killing);
    let acceleration = worst(|k| k.acceleration);
    let identity = worst(|k| k.identity);
    let mut report = VerificationReport::new("normalized_killing_geodesic");
    report.payload = Obj::new()
        .num("max_normalization_defect", normalization)
        .num("max_killing_residual", killing)
        .num("max_acceleration", acceleration)
        .num("max_identity_residual", identity)
        .set("killing_precondition", killing <= 1e-8)
        .set("samples", samples.len())
        .into();
    report.passed = identity <= 1e-8 && (killing > 1e-8 || acceleration <= 1e-8);
    Ok(report)
}
