//! Sections, fiber vector fields and the pullback identities.
//!
//! Two independent evaluation paths are kept apart on purpose:
//!
//! * [`SectionGeometry`] evaluates the fiber tensors at the support point
//!   `(x, s(x))` and combines them with `D s`;
//! * [`PullbackJets`] expands quantities along the section, in variables
//!   `(x, ε)` with `y = s(x) + ε`, so `∂/∂ε` is the fiber derivative and
//!   `∂/∂x` at `ε = 0` is the total derivative along `s`. The Levi-Civita
//!   connection of `s*g` and the derivatives of `s*Z` come from here.
//!
//! Identities compare one side from each path.

use nalgebra::DMatrix;

use crate::catalog::LagrangianSpec;
use crate::error::{GeometryError, Result};
use crate::expr::{Expr, Params, Scope};
use crate::jets::linalg::JetLu;
use crate::jets::{seed_variables, Jet};
use crate::tensors::{FiberGeometry, MeanCartanMethod, TensorBlock, Valence};
use crate::Jet64;

use Valence::{Down, Up};

/// A section `s: M → TM∖0` given by component expressions in `x`.
#[derive(Debug, Clone)]
pub struct SectionField {
    pub name: String,
    pub components: Vec<Expr>,
}

impl SectionField {
    pub fn parse<S: AsRef<str>>(name: &str, texts: &[S], dim: usize, params: &Params) -> Result<Self> {
        if texts.len() != dim {
            return Err(GeometryError::Invalid(format!(
                "section `{name}` has {} components, expected {dim}",
                texts.len()
            )));
        }
        let scope = Scope::base(dim).with_params(params.keys().cloned());
        let components = texts
            .iter()
            .map(|t| Expr::parse(t.as_ref(), &scope))
            .collect::<std::result::Result<_, _>>()?;
        Ok(SectionField {
            name: name.to_string(),
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn value(&self, x: &[f64], params: &Params) -> Result<Vec<f64>> {
        self.components
            .iter()
            .map(|c| Ok(c.eval_f64(x, &[], params)?))
            .collect()
    }

    /// Components of `s` evaluated on the given `x` jets.
    pub fn eval_jets(&self, x: &[Jet64], params: &Params) -> Result<Vec<Jet64>> {
        self.components
            .iter()
            .map(|c| Ok(c.eval_jet(x, &[], params)?))
            .collect()
    }

    /// `(s(x), ∂_μ s^α)` with the derivative at `[α n + μ]`.
    pub fn value_and_jacobian(&self, x: &[f64], params: &Params) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let active: Vec<usize> = (0..n).collect();
        let seeds = seed_variables(x, &active, 1)?;
        let jets = self.eval_jets(&seeds, params)?;
        let value = jets.iter().map(Jet::value).collect();
        let mut jac = Vec::with_capacity(n * n);
        for j in &jets {
            for mu in 0..n {
                jac.push(j.gradient(mu)?);
            }
        }
        Ok((value, jac))
    }
}

/// A vector field `Z` on the slit tangent bundle.
#[derive(Debug, Clone)]
pub enum FiberVectorField {
    /// Components `Z^μ(x, y)`.
    Components(Vec<Expr>),
    /// `Z^μ = g^{μν} ∂f/∂y^ν` for a scalar `f(x, y)`.
    VerticalGradient(Expr),
}

impl FiberVectorField {
    pub fn components<S: AsRef<str>>(texts: &[S], dim: usize, params: &Params) -> Result<Self> {
        if texts.len() != dim {
            return Err(GeometryError::Invalid(format!(
                "field has {} components, expected {dim}",
                texts.len()
            )));
        }
        let scope = Scope::fiber(dim).with_params(params.keys().cloned());
        let exprs = texts
            .iter()
            .map(|t| Expr::parse(t.as_ref(), &scope))
            .collect::<std::result::Result<_, _>>()?;
        Ok(FiberVectorField::Components(exprs))
    }

    pub fn vertical_gradient(text: &str, dim: usize, params: &Params) -> Result<Self> {
        let scope = Scope::fiber(dim).with_params(params.keys().cloned());
        Ok(FiberVectorField::VerticalGradient(Expr::parse(text, &scope)?))
    }

    /// `Z^μ` as jets over the `(x, y)`-type variables of the given context:
    /// `x`, `y` are coordinate jets and `ginv` the matching inverse metric.
    fn eval_with(
        &self,
        x: &[Jet64],
        y: &[Jet64],
        fiber_offset: usize,
        ginv: &[Jet64],
        params: &Params,
    ) -> Result<Vec<Jet64>> {
        match self {
            FiberVectorField::Components(c) => c.iter().map(|e| Ok(e.eval_jet(x, y, params)?)).collect(),
            FiberVectorField::VerticalGradient(f) => {
                let n = x.len();
                let f = f.eval_jet(x, y, params)?;
                let grad: Vec<Jet64> = (0..n)
                    .map(|nu| f.derivative(fiber_offset + nu))
                    .collect::<std::result::Result<_, _>>()?;
                Ok((0..n)
                    .map(|mu| {
                        let mut acc = ginv[mu * n].mul(&grad[0]);
                        for nu in 1..n {
                            acc = acc.add(&ginv[mu * n + nu].mul(&grad[nu]));
                        }
                        acc
                    })
                    .collect())
            }
        }
    }

    /// `Z^μ` in the variables of a fiber geometry.
    pub fn eval_at(&self, geo: &FiberGeometry) -> Result<Vec<Jet64>> {
        self.eval_with(
            geo.x_jets(),
            geo.y_jets(),
            geo.dim(),
            geo.inverse_metric_jets(),
            geo.spec().params(),
        )
    }
}

/// Which horizontal coefficients a derivative uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizontalConnection {
    ChernRund,
    Berwald,
}

/// Which Finsler connection is pulled back along a section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PullbackKind {
    ChernRund,
    Cartan,
    Berwald,
}

/// `δ_α Z^α + H^α_{μα} Z^μ` at the point of `geo`.
pub fn horizontal_div(geo: &FiberGeometry, z: &[Jet64], connection: HorizontalConnection) -> Result<f64> {
    let n = geo.dim();
    let coeffs = match connection {
        HorizontalConnection::ChernRund => geo.chern_rund_coeffs(),
        HorizontalConnection::Berwald => geo.berwald_coeffs()?,
    };
    let mut acc = 0.0;
    for alpha in 0..n {
        acc += geo.delta(&z[alpha], alpha)?.value();
        for mu in 0..n {
            acc += coeffs.get(&[alpha, mu, alpha]) * z[mu].value();
        }
    }
    Ok(acc)
}

/// `(∇^{HC}_α Z)^γ = δ_α Z^γ + Γ^γ_{μα} Z^μ` at `[γ n + α]`.
pub fn horizontal_derivative(geo: &FiberGeometry, z: &[Jet64]) -> Result<Vec<f64>> {
    let n = geo.dim();
    let gamma_c = geo.chern_rund_coeffs();
    let mut out = vec![0.0; n * n];
    for gamma in 0..n {
        for alpha in 0..n {
            let mut v = geo.delta(&z[gamma], alpha)?.value();
            for mu in 0..n {
                v += gamma_c.get(&[gamma, mu, alpha]) * z[mu].value();
            }
            out[gamma * n + alpha] = v;
        }
    }
    Ok(out)
}

/// Fiber tensors at the support point `(x, s(x))` together with `D s`.
#[derive(Debug, Clone)]
pub struct SectionGeometry<'a> {
    pub fiber: FiberGeometry<'a>,
    /// `∂_μ s^α` at `[α n + μ]`.
    pub ds: Vec<f64>,
    /// `D_μ s^α = ∂_μ s^α + N^α_μ(x, s)` at `[α n + μ]`.
    pub d: Vec<f64>,
}

impl<'a> SectionGeometry<'a> {
    pub fn new(spec: &'a LagrangianSpec, section: &SectionField, x: &[f64], order: usize) -> Result<Self> {
        let (s, ds) = section.value_and_jacobian(x, spec.params())?;
        let fiber = FiberGeometry::new(spec, x, &s, order)?;
        let nl = fiber.nonlinear_connection();
        let d = ds.iter().zip(&nl.entries).map(|(a, b)| a + b).collect();
        Ok(SectionGeometry { fiber, ds, d })
    }

    pub fn dim(&self) -> usize {
        self.fiber.dim()
    }

    pub fn s(&self) -> &[f64] {
        &self.fiber.point().y
    }

    pub fn d(&self, alpha: usize, mu: usize) -> f64 {
        self.d[alpha * self.dim() + mu]
    }

    /// `D_μ s^α` as a block.
    pub fn section_d(&self) -> TensorBlock {
        TensorBlock::new(self.dim(), vec![Up, Down], self.d.clone(), self.fiber.point().clone())
    }

    /// `D_s s^α = s^μ D_μ s^α`.
    pub fn d_along_s(&self) -> Vec<f64> {
        let n = self.dim();
        let s = self.s();
        (0..n)
            .map(|alpha| (0..n).map(|mu| s[mu] * self.d(alpha, mu)).sum())
            .collect()
    }

    /// `C^γ_{βμ} = g^{γσ} C_{σβμ}` at `[(γ n + β) n + μ]`.
    pub fn cartan_mixed(&self) -> Vec<f64> {
        let n = self.dim();
        let c = self.fiber.cartan_torsion();
        let gi = self.fiber.inverse_metric();
        let mut out = vec![0.0; n * n * n];
        for gamma in 0..n {
            for beta in 0..n {
                for mu in 0..n {
                    out[(gamma * n + beta) * n + mu] =
                        (0..n).map(|s| gi.get(&[gamma, s]) * c.get(&[s, beta, mu])).sum();
                }
            }
        }
        out
    }

    /// Coefficients `(∇ˢ)^γ_{αβ}` at `[(γ n + α) n + β]`, `α` the
    /// differentiation slot.
    pub fn pullback_connection_coeffs(&self, which: PullbackKind) -> Result<TensorBlock> {
        let n = self.dim();
        let mut block = match which {
            PullbackKind::ChernRund | PullbackKind::Cartan => self.fiber.chern_rund_coeffs(),
            PullbackKind::Berwald => self.fiber.berwald_coeffs()?,
        };
        if which == PullbackKind::Cartan {
            let cm = self.cartan_mixed();
            for gamma in 0..n {
                for alpha in 0..n {
                    for beta in 0..n {
                        let v: f64 = (0..n)
                            .map(|mu| cm[(gamma * n + beta) * n + mu] * self.d(mu, alpha))
                            .sum();
                        block.entries[(gamma * n + alpha) * n + beta] += v;
                    }
                }
            }
        }
        Ok(block)
    }
}

/// Jets along a section in the variables `(x, ε)`, `y = s(x) + ε`.
#[derive(Debug, Clone)]
pub struct PullbackJets<'a> {
    spec: &'a LagrangianSpec,
    x: Vec<f64>,
    s: Vec<f64>,
    seeds: Vec<Jet64>,
    y: Vec<Jet64>,
    g: Vec<Jet64>,
    ginv: Vec<Jet64>,
    christoffel: Vec<f64>,
}

impl<'a> PullbackJets<'a> {
    pub fn new(spec: &'a LagrangianSpec, section: &SectionField, x: &[f64], order: usize) -> Result<Self> {
        if order < 3 {
            return Err(GeometryError::OrderTooLow {
                what: "pullback jets",
                needed: 3,
                have: order,
            });
        }
        let n = spec.dim();
        let s = section.value(x, spec.params())?;
        spec.check_admissible(x, &s)?;
        let point: Vec<f64> = x.iter().copied().chain(std::iter::repeat_n(0.0, n)).collect();
        let active: Vec<usize> = (0..2 * n).collect();
        let seeds = seed_variables(&point, &active, order)?;
        let s_jets = section.eval_jets(&seeds[..n], spec.params())?;
        let y: Vec<Jet64> = s_jets.iter().zip(&seeds[n..]).map(|(a, b)| a.add(b)).collect();
        let l = spec.eval_jet(&seeds[..n], &y)?;
        let mut g = Vec::with_capacity(n * n);
        for mu in 0..n {
            let d = l.derivative(n + mu)?;
            for nu in 0..n {
                g.push(d.derivative(n + nu)?);
            }
        }
        crate::tensors::check_nondegenerate(&g, n)?;
        let ginv = JetLu::factor(&g, n)
            .map_err(|_| GeometryError::Degenerate { ratio: 0.0 })?
            .inverse();

        // Levi-Civita of h_{αβ}(x) = g_{αβ}(x, s(x)) from total x-derivatives
        let h = DMatrix::from_fn(n, n, |a, b| g[a * n + b].value());
        let hinv = h.try_inverse().ok_or(GeometryError::Degenerate { ratio: 0.0 })?;
        let dh = |c: usize, a: usize, b: usize| g[a * n + b].gradient(c).expect("order ≥ 3");
        let mut christoffel = vec![0.0; n * n * n];
        for alpha in 0..n {
            for beta in 0..n {
                for gamma in 0..n {
                    let mut acc = 0.0;
                    for sigma in 0..n {
                        acc += hinv[(alpha, sigma)]
                            * (dh(beta, sigma, gamma) + dh(gamma, sigma, beta) - dh(sigma, beta, gamma));
                    }
                    christoffel[(alpha * n + beta) * n + gamma] = 0.5 * acc;
                }
            }
        }
        Ok(PullbackJets {
            spec,
            x: x.to_vec(),
            s,
            seeds,
            y,
            g,
            ginv,
            christoffel,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Christoffel symbols of `s*g` at `[(α n + β) n + γ]`.
    pub fn metric_christoffels(&self) -> TensorBlock {
        let base = crate::tensors::FiberPoint::new(&self.x, &self.s);
        TensorBlock::new(self.dim(), vec![Up, Down, Down], self.christoffel.clone(), base)
    }

    /// `(s*g)_{αβ}` at the point.
    pub fn pulled_metric(&self) -> Vec<f64> {
        self.g.iter().map(Jet::value).collect()
    }

    /// `Z^μ(x, s(x) + ε)` as jets.
    pub fn field(&self, z: &FiberVectorField) -> Result<Vec<Jet64>> {
        let n = self.dim();
        z.eval_with(&self.seeds[..n], &self.y, n, &self.ginv, self.spec.params())
    }

    /// `Y = s*Z` and its total derivatives `∂_α Y^μ` at `[μ n + α]`.
    pub fn pulled_field(&self, z: &FiberVectorField) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let jets = self.field(z)?;
        let value = jets.iter().map(Jet::value).collect();
        let mut grad = Vec::with_capacity(n * n);
        for j in &jets {
            for alpha in 0..n {
                grad.push(j.gradient(alpha)?);
            }
        }
        Ok((value, grad))
    }

    /// Total derivative `∂_γ (2 L(x, s(x)))` = `∂_γ g_s(s, s)`.
    pub fn d_norm(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let l = self.spec.eval_jet(&self.seeds[..n], &self.y)?;
        (0..n).map(|c| Ok(2.0 * l.gradient(c)?)).collect()
    }

    /// `∇^{s*g} · s*Z`.
    pub fn divergence(&self, z: &FiberVectorField) -> Result<f64> {
        let n = self.dim();
        let (y, dy) = self.pulled_field(z)?;
        let mut acc = 0.0;
        for alpha in 0..n {
            acc += dy[alpha * n + alpha];
            for mu in 0..n {
                acc += self.christoffel[(alpha * n + alpha) * n + mu] * y[mu];
            }
        }
        Ok(acc)
    }
}

/// Both sides of an identity and their largest entrywise difference.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: f64,
    /// Largest magnitude among the entries of either side.
    pub scale: f64,
}

impl IdentityCheck {
    pub fn new(lhs: Vec<f64>, rhs: Vec<f64>) -> Self {
        let residual = lhs.iter().zip(&rhs).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = lhs.iter().chain(&rhs).fold(0.0_f64, |m, v| m.max(v.abs()));
        IdentityCheck {
            lhs,
            rhs,
            residual,
            scale,
        }
    }

    /// Residual relative to `max(1, scale)`.
    pub fn normalized(&self) -> f64 {
        self.residual / self.scale.max(1.0)
    }
}

/// The connection difference `∇^{s*g} − ∇ˢ(ChR)` against its expression in
/// `C` and `D s`, as (1,2)-tensors at `[(α n + β) n + γ]`.
pub fn connection_difference(spec: &LagrangianSpec, section: &SectionField, x: &[f64]) -> Result<IdentityCheck> {
    let sg = SectionGeometry::new(spec, section, x, 3)?;
    let pb = PullbackJets::new(spec, section, x, 3)?;
    let n = spec.dim();
    let gamma = sg.fiber.chern_rund_coeffs();
    let lhs: Vec<f64> = pb.christoffel.iter().zip(&gamma.entries).map(|(a, b)| a - b).collect();

    let c = sg.fiber.cartan_torsion();
    let cm = sg.cartan_mixed();
    let gi = sg.fiber.inverse_metric();
    let mut rhs = vec![0.0; n * n * n];
    for alpha in 0..n {
        for beta in 0..n {
            for gam in 0..n {
                let mut v = 0.0;
                for mu in 0..n {
                    v += cm[(alpha * n + mu) * n + beta] * sg.d(mu, gam);
                    v += cm[(alpha * n + mu) * n + gam] * sg.d(mu, beta);
                    for delta in 0..n {
                        v -= c.get(&[mu, beta, gam]) * gi.get(&[alpha, delta]) * sg.d(mu, delta);
                    }
                }
                rhs[(alpha * n + beta) * n + gam] = v;
            }
        }
    }
    Ok(IdentityCheck::new(lhs, rhs))
}

pub fn connection_difference_residual(spec: &LagrangianSpec, section: &SectionField, x: &[f64]) -> Result<f64> {
    Ok(connection_difference(spec, section, x)?.residual)
}

/// Traced form: `Γ̊^α_{αμ} − Γ^α_{αμ}` against `I_ν D_μ s^ν`, per `μ`.
pub fn corollary_check(spec: &LagrangianSpec, section: &SectionField, x: &[f64]) -> Result<IdentityCheck> {
    let sg = SectionGeometry::new(spec, section, x, 3)?;
    let pb = PullbackJets::new(spec, section, x, 3)?;
    let n = spec.dim();
    let gamma = sg.fiber.chern_rund_coeffs();
    let i = sg.fiber.mean_cartan_torsion(MeanCartanMethod::LogDet);
    let lhs = (0..n)
        .map(|mu| {
            (0..n)
                .map(|a| pb.christoffel[(a * n + a) * n + mu] - gamma.get(&[a, a, mu]))
                .sum()
        })
        .collect();
    let rhs = (0..n)
        .map(|mu| (0..n).map(|nu| i.get(&[nu]) * sg.d(nu, mu)).sum())
        .collect();
    Ok(IdentityCheck::new(lhs, rhs))
}

/// Chain rule for the pulled-back field, entries `[γ n + α]` for `X = ∂_α`:
/// `∂_α Y^γ + Γ^γ_{αβ} Y^β` against `(∇^{HC}_α Z)^γ + ∂Z^γ/∂y^β D_α s^β`.
pub fn lemma_chain(
    spec: &LagrangianSpec,
    z: &FiberVectorField,
    section: &SectionField,
    x: &[f64],
) -> Result<IdentityCheck> {
    let sg = SectionGeometry::new(spec, section, x, 3)?;
    let pb = PullbackJets::new(spec, section, x, 3)?;
    let n = spec.dim();
    let gamma = sg.fiber.chern_rund_coeffs();
    let (y, dy) = pb.pulled_field(z)?;
    let mut lhs = vec![0.0; n * n];
    for g in 0..n {
        for a in 0..n {
            let mut v = dy[g * n + a];
            for b in 0..n {
                v += gamma.get(&[g, a, b]) * y[b];
            }
            lhs[g * n + a] = v;
        }
    }
    let zj = z.eval_at(&sg.fiber)?;
    let mut rhs = horizontal_derivative(&sg.fiber, &zj)?;
    for g in 0..n {
        for a in 0..n {
            for b in 0..n {
                rhs[g * n + a] += zj[g].gradient(n + b)? * sg.d(b, a);
            }
        }
    }
    Ok(IdentityCheck::new(lhs, rhs))
}

pub fn lemma_chain_residual(
    spec: &LagrangianSpec,
    z: &FiberVectorField,
    section: &SectionField,
    x: &[f64],
) -> Result<f64> {
    Ok(lemma_chain(spec, z, section, x)?.residual)
}

/// Right-hand side pieces of the divergence formula along a section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceTerms {
    /// `∇^{s*g} · s*Z` from the pullback path.
    pub lhs: f64,
    /// `s*(∇^{HC} · Z)`.
    pub horizontal: f64,
    /// `I_μ D_ν s^μ Y^ν`.
    pub mean_cartan: f64,
    /// `∂Z^μ/∂y^β D_μ s^β`.
    pub chain: f64,
}

impl DivergenceTerms {
    pub fn rhs(&self) -> f64 {
        self.horizontal + self.mean_cartan + self.chain
    }

    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs()).abs()
    }

    /// Residual with the mean-Cartan term removed.
    pub fn ablated_residual(&self) -> f64 {
        (self.lhs - self.horizontal - self.chain).abs()
    }
}

/// Fiber-side terms of the divergence formula at a prepared support point.
pub fn divergence_rhs_terms(sg: &SectionGeometry, z: &FiberVectorField) -> Result<(f64, f64, f64)> {
    let n = sg.dim();
    let zj = z.eval_at(&sg.fiber)?;
    let horizontal = horizontal_div(&sg.fiber, &zj, HorizontalConnection::ChernRund)?;
    let i = sg.fiber.mean_cartan_torsion(MeanCartanMethod::Contract);
    let mut mean_cartan = 0.0;
    let mut chain = 0.0;
    for mu in 0..n {
        for nu in 0..n {
            mean_cartan += i.get(&[mu]) * sg.d(mu, nu) * zj[nu].value();
            chain += zj[mu].gradient(n + nu)? * sg.d(nu, mu);
        }
    }
    Ok((horizontal, mean_cartan, chain))
}

pub fn divergence_oap(
    spec: &LagrangianSpec,
    z: &FiberVectorField,
    section: &SectionField,
    x: &[f64],
) -> Result<DivergenceTerms> {
    let sg = SectionGeometry::new(spec, section, x, 3)?;
    let pb = PullbackJets::new(spec, section, x, 3)?;
    let (horizontal, mean_cartan, chain) = divergence_rhs_terms(&sg, z)?;
    Ok(DivergenceTerms {
        lhs: pb.divergence(z)?,
        horizontal,
        mean_cartan,
        chain,
    })
}

/// Two forms of `∇^{HC} · Z` for `Z^μ = g^{μν} ∂f/∂y^ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalGradientDiv {
    /// Horizontal divergence of the raised vertical gradient.
    pub form_a: f64,
    /// `∂/∂y^ν (g^{νμ} δ_μ f)`.
    pub vertical_div: f64,
    /// `2 I^μ δ_μ f`.
    pub mean_cartan: f64,
    /// `J^α ∂f/∂y^α`.
    pub landsberg: f64,
}

impl VerticalGradientDiv {
    pub fn form_b(&self) -> f64 {
        self.vertical_div + self.mean_cartan + self.landsberg
    }
}

/// Needs an order-4 geometry (the elaborated form differentiates `N`).
pub fn vertical_gradient_div(geo: &FiberGeometry, f: &Expr) -> Result<VerticalGradientDiv> {
    if geo.order() < 4 {
        return Err(GeometryError::OrderTooLow {
            what: "vertical gradient divergence",
            needed: 4,
            have: geo.order(),
        });
    }
    let n = geo.dim();
    let z = FiberVectorField::VerticalGradient(f.clone()).eval_at(geo)?;
    let form_a = horizontal_div(geo, &z, HorizontalConnection::ChernRund)?;

    let fj = f.eval_jet(geo.x_jets(), geo.y_jets(), geo.spec().params())?;
    let deltas: Vec<Jet64> = (0..n).map(|mu| geo.delta(&fj, mu)).collect::<Result<_>>()?;
    let ginv = geo.inverse_metric_jets();
    let mut vertical_div = 0.0;
    for nu in 0..n {
        let mut h = ginv[nu * n].mul(&deltas[0]);
        for mu in 1..n {
            h = h.add(&ginv[nu * n + mu].mul(&deltas[mu]));
        }
        vertical_div += h.gradient(n + nu)?;
    }
    let gi = geo.inverse_metric();
    let i = geo.mean_cartan_torsion(MeanCartanMethod::Contract);
    let (_, j) = geo.landsberg()?;
    let mut mean_cartan = 0.0;
    let mut landsberg = 0.0;
    for a in 0..n {
        for b in 0..n {
            mean_cartan += 2.0 * gi.get(&[a, b]) * i.get(&[b]) * deltas[a].value();
            landsberg += gi.get(&[a, b]) * j.get(&[b]) * fj.gradient(n + a)?;
        }
    }
    Ok(VerticalGradientDiv {
        form_a,
        vertical_div,
        mean_cartan,
        landsberg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_lagrangian, LagrangianParams};

    fn quartic() -> LagrangianSpec {
        let p = LagrangianParams {
            weights: Some(vec!["1 + 0.2*x1^2".into(), "1 + 0.3*x2".into(), "exp(0.2*x0)".into()]),
            ..Default::default()
        };
        build_lagrangian("quartic", 3, &p, &Params::new()).unwrap()
    }

    fn section(texts: &[&str]) -> SectionField {
        SectionField::parse("s", texts, texts.len(), &Params::new()).unwrap()
    }

    #[test]
    fn minkowski_constant_section_is_parallel() {
        let spec = build_lagrangian("minkowski", 4, &Default::default(), &Params::new()).unwrap();
        let s = section(&["1", "0.2", "0", "0.1"]);
        let sg = SectionGeometry::new(&spec, &s, &[0.1, 0.2, 0.3, 0.4], 3).unwrap();
        assert_eq!(sg.section_d().max_abs(), 0.0);
    }

    #[test]
    fn quartic_identities() {
        let spec = quartic();
        let s = section(&["0.5 + 0.1*x1", "1 + 0.2*x0*x2", "-0.8 + 0.1*sin(x0)"]);
        let x = [0.2, 0.3, -0.1];
        let dos = connection_difference(&spec, &s, &x).unwrap();
        assert!(dos.scale > 1e-3);
        assert!(dos.residual < 1e-10, "{dos:?}");
        let cor = corollary_check(&spec, &s, &x).unwrap();
        assert!(cor.residual < 1e-10, "{cor:?}");
        let z = FiberVectorField::components(&["x0*y1", "y2^2/y0", "x1 + y0"], 3, &Params::new()).unwrap();
        assert!(lemma_chain_residual(&spec, &z, &s, &x).unwrap() < 1e-10);
        let t = divergence_oap(&spec, &z, &s, &x).unwrap();
        assert!(t.residual() < 1e-10, "{t:?}");
        assert!(t.mean_cartan.abs() > 1e-4);
        assert!((t.ablated_residual() - t.mean_cartan.abs()).abs() < 1e-10);
    }

    #[test]
    fn quartic_vertical_gradient_forms() {
        let spec = quartic();
        let f = Expr::parse("x0*y1^2 + y0*y2*x2", &Scope::fiber(3)).unwrap();
        let geo = FiberGeometry::new(&spec, &[0.2, 0.3, -0.1], &[0.5, 1.1, -0.8], 4).unwrap();
        let v = vertical_gradient_div(&geo, &f).unwrap();
        assert!(v.mean_cartan.abs() > 1e-4 && v.landsberg.abs() > 1e-6, "{v:?}");
        assert!((v.form_a - v.form_b()).abs() < 1e-10, "{v:?}");
    }

    #[test]
    fn berwald_and_chern_rund_divergence_differ_by_j() {
        let spec = quartic();
        let geo = FiberGeometry::new(&spec, &[0.2, 0.3, -0.1], &[0.5, 1.1, -0.8], 4).unwrap();
        let z = FiberVectorField::components(&["x0*y1", "y2^2/y0", "x1 + y0"], 3, &Params::new())
            .unwrap()
            .eval_at(&geo)
            .unwrap();
        let c = horizontal_div(&geo, &z, HorizontalConnection::ChernRund).unwrap();
        let b = horizontal_div(&geo, &z, HorizontalConnection::Berwald).unwrap();
        let (_, j) = geo.landsberg().unwrap();
        let jz: f64 = (0..3).map(|m| j.get(&[m]) * z[m].value()).sum();
        assert!(jz.abs() > 1e-6);
        assert!((b - c - jz).abs() < 1e-10);
    }
}
