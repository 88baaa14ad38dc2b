//! Run configuration: one TOML document, fully validated before any
//! computation starts.

use std::path::{Path, PathBuf};

use finsler_core::catalog::{build_lagrangian, LagrangianParams, LagrangianSpec};
use finsler_core::connections::{FiberVectorField, SectionField};
use finsler_core::conservation::EnergyTolerances;
use finsler_core::expr::{Expr, Params, Scope};
use finsler_core::integration::{BoxDomain, DivergenceTolerances};
use finsler_core::sampling::SampleRegion;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lagrangian: LagrangianConfig,
    /// Named constants usable in every expression.
    #[serde(default)]
    pub parameters: Params,
    /// Components of the section `s(x)`.
    pub section: Option<Vec<String>>,
    pub field: Option<FieldConfig>,
    pub domain: Option<DomainConfig>,
    /// Explicit evaluation points.
    #[serde(default)]
    pub points: Vec<PointConfig>,
    pub sampling: Option<SamplingConfig>,
    pub faces: Option<FacesConfig>,
    pub energy: Option<EnergyConfig>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    /// Checks to run; empty selects the command's defaults.
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianConfig {
    pub id: String,
    pub dim: usize,
    #[serde(default)]
    pub params: LagrangianParams,
}

/// `Z` by components, or as the raised vertical gradient of a scalar.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub components: Option<Vec<String>>,
    pub gradient_of: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
}

fn default_orders() -> Vec<usize> {
    vec![4, 8, 12]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub x: Vec<f64>,
    /// Fiber vector; `s(x)` when omitted.
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    /// Center of the fiber cube; needed for fiber-point sampling only.
    #[serde(default)]
    pub y_center: Vec<f64>,
    #[serde(default = "default_radius")]
    pub y_radius: f64,
    #[serde(default)]
    pub min_component: f64,
    pub max_condition: Option<f64>,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_radius() -> f64 {
    0.5
}

impl SamplingConfig {
    pub fn region(&self) -> SampleRegion {
        let mut r = SampleRegion::new(&self.x_lower, &self.x_upper, &self.y_center, self.y_radius)
            .with_min_component(self.min_component);
        r.max_condition = self.max_condition;
        r
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacesConfig {
    /// Newton seeds, one per face in (axis, lower/upper) order.
    pub seeds: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    #[serde(default)]
    pub axis: usize,
    pub slice_seed: Option<Vec<f64>>,
    pub lateral_seeds: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    /// Pointwise identities.
    pub identity: f64,
    /// Euler residual and homogeneity ladder, relative.
    pub homogeneity: f64,
    /// `|I|`, `|J|` in the tensor dump's vanishing check.
    pub mean_cartan: f64,
    pub residual: f64,
    pub mean_cartan_gate: f64,
    pub det_spread: f64,
    pub noise_floor: f64,
    pub hypothesis: f64,
    pub drift: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let d = DivergenceTolerances::default();
        let e = EnergyTolerances::default();
        ToleranceConfig {
            identity: 1e-8,
            homogeneity: 1e-10,
            mean_cartan: 1e-8,
            residual: d.residual,
            mean_cartan_gate: d.mean_cartan_gate,
            det_spread: d.det_spread,
            noise_floor: d.noise_floor,
            hypothesis: e.hypothesis,
            drift: e.drift,
        }
    }
}

impl ToleranceConfig {
    pub fn divergence(&self) -> DivergenceTolerances {
        DivergenceTolerances {
            residual: self.residual,
            mean_cartan_gate: self.mean_cartan_gate,
            det_spread: self.det_spread,
            noise_floor: self.noise_floor,
        }
    }

    pub fn energy(&self) -> EnergyTolerances {
        EnergyTolerances {
            hypothesis: self.hypothesis,
            drift: self.drift,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// JSON report path (overridden by `--out`).
    pub report: Option<PathBuf>,
    /// Delimiter-separated convergence table.
    pub csv: Option<PathBuf>,
}

/// A configuration with every expression parsed and every shape checked.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub raw: RunConfig,
    pub spec: LagrangianSpec,
    pub section: Option<SectionField>,
    pub field: Option<FiberVectorField>,
    /// Scalar whose raised vertical gradient is `Z`, when given that way.
    pub potential: Option<Expr>,
    pub domain: Option<BoxDomain>,
}

fn config_err(path: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn check_len(path: &str, v: &[f64], n: usize) -> Result<(), CliError> {
    if v.len() != n {
        return Err(config_err(path, format!("expected {n} components, found {}", v.len())));
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| {
            let span = e
                .span()
                .map(|s| format!(" (bytes {}..{})", s.start, s.end))
                .unwrap_or_default();
            config_err("<document>", format!("{}{span}", e.message()))
        })
    }

    pub fn prepare(self) -> Result<Prepared, CliError> {
        let l = &self.lagrangian;
        let spec =
            build_lagrangian(&l.id, l.dim, &l.params, &self.parameters).map_err(|e| config_err("lagrangian", e))?;
        let n = spec.dim();

        let section = match &self.section {
            None => None,
            Some(texts) => {
                if texts.len() != n {
                    return Err(config_err(
                        "section",
                        format!("expected {n} components, found {}", texts.len()),
                    ));
                }
                Some(SectionField::parse("s", texts, n, &self.parameters).map_err(|e| config_err("section", e))?)
            }
        };

        let (field, potential) = match &self.field {
            None => (None, None),
            Some(FieldConfig {
                components: Some(c),
                gradient_of: None,
            }) => {
                if c.len() != n {
                    return Err(config_err(
                        "field.components",
                        format!("expected {n} components, found {}", c.len()),
                    ));
                }
                let z = FiberVectorField::components(c, n, &self.parameters)
                    .map_err(|e| config_err("field.components", e))?;
                (Some(z), None)
            }
            Some(FieldConfig {
                components: None,
                gradient_of: Some(f),
            }) => {
                let scope = Scope::fiber(n).with_params(self.parameters.keys().cloned());
                let expr = Expr::parse(f, &scope).map_err(|e| config_err("field.gradient_of", e))?;
                let z = FiberVectorField::vertical_gradient(f, n, &self.parameters)
                    .map_err(|e| config_err("field.gradient_of", e))?;
                (Some(z), Some(expr))
            }
            Some(_) => {
                return Err(config_err("field", "give exactly one of `components` or `gradient_of`"));
            }
        };

        let domain = match &self.domain {
            None => None,
            Some(d) => {
                check_len("domain.lower", &d.lower, n)?;
                check_len("domain.upper", &d.upper, n)?;
                if d.orders.is_empty() || d.orders.contains(&0) {
                    return Err(config_err("domain.orders", "orders must be positive"));
                }
                Some(BoxDomain::new(&d.lower, &d.upper).map_err(|e| config_err("domain", e))?)
            }
        };

        for (i, p) in self.points.iter().enumerate() {
            check_len(&format!("points[{i}].x"), &p.x, n)?;
            if let Some(y) = &p.y {
                check_len(&format!("points[{i}].y"), y, n)?;
            }
        }
        if let Some(s) = &self.sampling {
            check_len("sampling.x_lower", &s.x_lower, n)?;
            check_len("sampling.x_upper", &s.x_upper, n)?;
            if !s.y_center.is_empty() {
                check_len("sampling.y_center", &s.y_center, n)?;
            }
        }
        if let Some(f) = &self.faces {
            if f.seeds.len() != 2 * n {
                return Err(config_err(
                    "faces.seeds",
                    format!("expected {} seeds, found {}", 2 * n, f.seeds.len()),
                ));
            }
            for (i, s) in f.seeds.iter().enumerate() {
                check_len(&format!("faces.seeds[{i}]"), s, n)?;
            }
        }
        if let Some(e) = &self.energy {
            if e.axis >= n {
                return Err(config_err(
                    "energy.axis",
                    format!("axis {} out of range for dimension {n}", e.axis),
                ));
            }
            if let Some(s) = &e.slice_seed {
                check_len("energy.slice_seed", s, n)?;
            }
            if let Some(seeds) = &e.lateral_seeds {
                if seeds.len() != 2 * (n - 1) {
                    return Err(config_err(
                        "energy.lateral_seeds",
                        format!("expected {} seeds, found {}", 2 * (n - 1), seeds.len()),
                    ));
                }
                for (i, s) in seeds.iter().enumerate() {
                    check_len(&format!("energy.lateral_seeds[{i}]"), s, n)?;
                }
            }
        }
        Ok(Prepared {
            raw: self,
            spec,
            section,
            field,
            potential,
            domain,
        })
    }
}

impl Prepared {
    pub fn require_section(&self) -> Result<&SectionField, CliError> {
        self.section
            .as_ref()
            .ok_or_else(|| config_err("section", "this command needs a section"))
    }

    pub fn require_field(&self) -> Result<&FiberVectorField, CliError> {
        self.field
            .as_ref()
            .ok_or_else(|| config_err("field", "this command needs a field"))
    }

    pub fn require_domain(&self) -> Result<&BoxDomain, CliError> {
        self.domain
            .as_ref()
            .ok_or_else(|| config_err("domain", "this command needs a domain"))
    }

    pub fn orders(&self) -> Vec<usize> {
        self.raw
            .domain
            .as_ref()
            .map(|d| d.orders.clone())
            .unwrap_or_else(default_orders)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        section = ["1", "0", "0", "0"]
        [lagrangian]
        id = "minkowski"
        dim = 4
    "#;

    #[test]
    fn minimal_config_prepares() {
        let p = RunConfig::parse(MINIMAL).unwrap().prepare().unwrap();
        assert_eq!(p.spec.dim(), 4);
        assert!(p.section.is_some() && p.field.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config { .. })));
    }

    #[test]
    fn dimension_mismatch_names_the_path() {
        let text = MINIMAL.replace(r#"["1", "0", "0", "0"]"#, r#"["1", "0", "0"]"#);
        match RunConfig::parse(&text).unwrap().prepare() {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "section"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn field_needs_exactly_one_form() {
        let text = format!("{MINIMAL}\n[field]\ncomponents = [\"1\",\"0\",\"0\",\"0\"]\ngradient_of = \"y0\"\n");
        assert!(RunConfig::parse(&text).unwrap().prepare().is_err());
    }
}
