//! The four verification commands. Each turns a prepared configuration
//! into reports plus an optional convergence table.

use finsler_core::connections::{connection_difference, corollary_check, divergence_oap, lemma_chain, SectionField};
use finsler_core::conservation::{hud_terms, two_slice_drift, EnergyProblem};
use finsler_core::integration::{
    verify_divergence_finsler, verify_divergence_rund, DivergenceOutcome, DivergenceProblem, FinslerOptions,
};
use finsler_core::quadrature::map_points;
use finsler_core::report::{Obj, VerificationReport};
use finsler_core::sampling::{sample_base_points, sample_fiber_points};
use finsler_core::tensors::{FiberGeometry, FiberPoint, MeanCartanMethod, TensorBlock, Valence};
use finsler_core::GeometryError;
use serde_json::Value;

use crate::config::Prepared;
use crate::error::CliError;

/// Command-line overrides shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub orders: Option<Vec<usize>>,
    pub force: bool,
    pub seed_scale: Option<f64>,
}

/// Reports of one run and, for integral checks, a convergence table.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub reports: Vec<VerificationReport>,
    pub table: Option<Table>,
    /// Set when a check refused to run because a hypothesis failed.
    pub refused: bool,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<&'static str>,
    /// Rows lead with the quadrature order; NaN marks a missing value.
    pub rows: Vec<Vec<f64>>,
}

fn config_err(path: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config {
        path: path.into(),
        message: message.to_string(),
    }
}

/// What the run was asked to do, echoed into every report.
fn inputs_echo(cfg: &Prepared, opts: &RunOptions) -> Value {
    let raw = &cfg.raw;
    let mut o = Obj::new()
        .set("lagrangian", raw.lagrangian.id.clone())
        .set("dim", raw.lagrangian.dim)
        .set("force", opts.force);
    if let Some(s) = &raw.section {
        o = o.set("section", s.clone());
    }
    if let Some(f) = &raw.field {
        if let Some(c) = &f.components {
            o = o.set("field_components", c.clone());
        }
        if let Some(g) = &f.gradient_of {
            o = o.set("field_gradient_of", g.clone());
        }
    }
    if let Some(d) = &cfg.domain {
        o = o.nums("domain_lower", &d.lower).nums("domain_upper", &d.upper);
    }
    if let Some(s) = opts.seed_scale {
        o = o.num("seed_scale", s);
    }
    o.into()
}

fn finish(cfg: &Prepared, opts: &RunOptions, mut out: Outcome) -> Outcome {
    let echo = inputs_echo(cfg, opts);
    for r in &mut out.reports {
        r.inputs = echo.clone();
    }
    out
}

/// Fiber points: explicit ones (with `y = s(x)` by default), then sampled.
fn fiber_points(cfg: &Prepared) -> Result<Vec<FiberPoint>, CliError> {
    let mut pts = Vec::new();
    for (i, p) in cfg.raw.points.iter().enumerate() {
        let y = match (&p.y, &cfg.section) {
            (Some(y), _) => y.clone(),
            (None, Some(s)) => s.value(&p.x, cfg.spec.params())?,
            (None, None) => return Err(config_err(&format!("points[{i}].y"), "needs `y` or a section")),
        };
        pts.push(FiberPoint::new(&p.x, &y));
    }
    if let Some(s) = &cfg.raw.sampling {
        let region = s.region();
        if !s.y_center.is_empty() {
            pts.extend(sample_fiber_points(&cfg.spec, &region, s.count, s.seed)?);
        } else if let Some(sec) = &cfg.section {
            for x in sample_base_points(&cfg.spec, sec, &region, s.count, s.seed)? {
                let y = sec.value(&x, cfg.spec.params())?;
                pts.push(FiberPoint::new(&x, &y));
            }
        } else {
            return Err(config_err("sampling.y_center", "needs `y_center` or a section"));
        }
    }
    if pts.is_empty() {
        return Err(config_err(
            "points",
            "no evaluation points (give `points` or `sampling`)",
        ));
    }
    Ok(pts)
}

/// Base points for section identities.
fn base_points(cfg: &Prepared, section: &SectionField) -> Result<Vec<Vec<f64>>, CliError> {
    let mut pts: Vec<Vec<f64>> = cfg.raw.points.iter().map(|p| p.x.clone()).collect();
    if let Some(s) = &cfg.raw.sampling {
        pts.extend(sample_base_points(&cfg.spec, section, &s.region(), s.count, s.seed)?);
    }
    if pts.is_empty() {
        return Err(config_err(
            "points",
            "no evaluation points (give `points` or `sampling`)",
        ));
    }
    Ok(pts)
}

fn block_value(t: &TensorBlock) -> Value {
    let valence: Vec<&str> = t
        .valence
        .iter()
        .map(|v| if *v == Valence::Up { "up" } else { "down" })
        .collect();
    Obj::new().set("valence", valence).nums("entries", &t.entries).into()
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

pub fn cmd_tensors(cfg: &Prepared, opts: &RunOptions) -> Result<Outcome, CliError> {
    let checks = &cfg.raw.checks;
    if let Some(bad) = checks.iter().find(|c| c.as_str() != "mean_cartan_vanishes") {
        return Err(config_err("checks", format!("unknown tensors check `{bad}`")));
    }
    let pts = fiber_points(cfg)?;
    let dumps = map_points(&pts, |p| -> Result<(Value, f64, f64), GeometryError> {
        let geo = FiberGeometry::new(&cfg.spec, &p.x, &p.y, 4)?;
        let i = geo.mean_cartan_torsion(MeanCartanMethod::Contract);
        let i_log = geo.mean_cartan_torsion(MeanCartanMethod::LogDet);
        let (landsberg, j) = geo.landsberg()?;
        let value = Obj::new()
            .nums("x", &p.x)
            .nums("y", &p.y)
            .num("lagrangian", geo.lagrangian_jet().value())
            .set("metric", block_value(&geo.metric()))
            .set("cartan", block_value(&geo.cartan_torsion()))
            .set("mean_cartan", block_value(&i))
            .set("mean_cartan_logdet", block_value(&i_log))
            .set("spray", block_value(&geo.spray()))
            .set("nonlinear_connection", block_value(&geo.nonlinear_connection()))
            .set("berwald", block_value(&geo.berwald_coeffs()?))
            .set("chern_rund", block_value(&geo.chern_rund_coeffs()))
            .set("landsberg", block_value(&landsberg))
            .set("landsberg_trace", block_value(&j))
            .into();
        Ok((value, i.max_abs(), j.max_abs()))
    })?;
    let max_i = max_of(dumps.iter().map(|d| d.1));
    let max_j = max_of(dumps.iter().map(|d| d.2));
    let mut report = VerificationReport::new("tensors");
    let mut payload = Obj::new()
        .set("points", dumps.into_iter().map(|d| d.0).collect::<Vec<_>>())
        .num("max_abs_mean_cartan", max_i)
        .num("max_abs_landsberg_trace", max_j);
    if !checks.is_empty() {
        let tol = cfg.raw.tolerances.mean_cartan;
        payload = payload.num("tolerance", tol);
        report.passed = max_i <= tol && max_j <= tol;
    }
    report.payload = payload.into();
    Ok(finish(
        cfg,
        opts,
        Outcome {
            reports: vec![report],
            ..Default::default()
        },
    ))
}

const IDENTITY_CHECKS: [&str; 6] = ["homogeneity", "trace", "dos", "lemma", "oap", "hud"];

/// `max|a − factor·b| / (1 + max|a|)`.
fn ladder(a: &TensorBlock, b: &TensorBlock, factor: f64) -> f64 {
    let worst = a
        .entries
        .iter()
        .zip(&b.entries)
        .fold(0.0f64, |m, (x, y)| m.max((x - factor * y).abs()));
    worst / (1.0 + a.max_abs())
}

fn homogeneity_report(cfg: &Prepared, pts: &[FiberPoint]) -> Result<VerificationReport, CliError> {
    // per point: euler, C symmetry, y·C, g, C, G, N, Berwald, Γ
    let rows = map_points(pts, |p| -> Result<[f64; 9], GeometryError> {
        let geo = FiberGeometry::new(&cfg.spec, &p.x, &p.y, 4)?;
        let y2: Vec<f64> = p.y.iter().map(|v| 2.0 * v).collect();
        let geo2 = FiberGeometry::new(&cfg.spec, &p.x, &y2, 4)?;
        let n = geo.dim();
        let l = geo.lagrangian_jet().value();
        let euler = cfg.spec.homogeneity_residual(&p.x, &p.y)?.abs() / (1.0 + l.abs());
        let c = geo.cartan_torsion();
        let sym = c
            .symmetry_defect(0, 1)
            .max(c.symmetry_defect(1, 2))
            .max(c.symmetry_defect(0, 2));
        let mut yc = 0.0f64;
        for b in 0..n {
            for g in 0..n {
                yc = yc.max((0..n).map(|a| p.y[a] * c.get(&[a, b, g])).sum::<f64>().abs());
            }
        }
        Ok([
            euler,
            sym,
            yc / (1.0 + c.max_abs()),
            ladder(&geo2.metric(), &geo.metric(), 1.0),
            ladder(&geo2.cartan_torsion(), &c, 0.5),
            ladder(&geo2.spray(), &geo.spray(), 4.0),
            ladder(&geo2.nonlinear_connection(), &geo.nonlinear_connection(), 2.0),
            ladder(&geo2.berwald_coeffs()?, &geo.berwald_coeffs()?, 1.0),
            ladder(&geo2.chern_rund_coeffs(), &geo.chern_rund_coeffs(), 1.0),
        ])
    })?;
    let names = [
        "euler",
        "cartan_symmetry",
        "cartan_contraction",
        "ladder_metric",
        "ladder_cartan",
        "ladder_spray",
        "ladder_nonlinear",
        "ladder_berwald",
        "ladder_chern_rund",
    ];
    let tol = cfg.raw.tolerances.homogeneity;
    let mut o = Obj::new().num("tolerance", tol).set("points", pts.len());
    let mut passed = true;
    for (k, name) in names.iter().enumerate() {
        let m = max_of(rows.iter().map(|r| r[k]));
        // fourth-derivative objects get one decade more room
        let limit = if k >= 7 { 10.0 * tol } else { tol };
        passed &= m <= limit;
        o = o.num(&format!("max_{name}"), m);
    }
    let mut r = VerificationReport::new("identities_homogeneity");
    r.payload = o.into();
    r.passed = passed;
    Ok(r)
}

fn trace_report(cfg: &Prepared, pts: &[FiberPoint]) -> Result<VerificationReport, CliError> {
    let rows = map_points(pts, |p| -> Result<[f64; 3], GeometryError> {
        let geo = FiberGeometry::new(&cfg.spec, &p.x, &p.y, 3)?;
        let i = geo.mean_cartan_torsion(MeanCartanMethod::Contract);
        let i_log = geo.mean_cartan_torsion(MeanCartanMethod::LogDet);
        Ok([
            geo.trace_identity_residual()?,
            geo.metric_compatibility_residual(),
            i.max_diff(&i_log),
        ])
    })?;
    let tol = cfg.raw.tolerances.identity;
    let m: Vec<f64> = (0..3).map(|k| max_of(rows.iter().map(|r| r[k]))).collect();
    let mut r = VerificationReport::new("identities_trace");
    r.payload = Obj::new()
        .num("max_trace_identity", m[0])
        .num("max_metric_compatibility", m[1])
        .num("max_mean_cartan_methods", m[2])
        .num("tolerance", tol)
        .set("points", pts.len())
        .into();
    r.passed = m.iter().all(|v| *v <= tol);
    Ok(r)
}

pub fn cmd_identities(cfg: &Prepared, opts: &RunOptions) -> Result<Outcome, CliError> {
    let explicit = !cfg.raw.checks.is_empty();
    for c in &cfg.raw.checks {
        if !IDENTITY_CHECKS.contains(&c.as_str()) {
            return Err(config_err("checks", format!("unknown identities check `{c}`")));
        }
    }
    let wanted = |c: &str| !explicit || cfg.raw.checks.iter().any(|x| x == c);
    let needs = |c: &str, have: bool, what: &str| -> Result<bool, CliError> {
        match (wanted(c), have) {
            (false, _) => Ok(false),
            (true, true) => Ok(true),
            (true, false) if explicit => Err(config_err(what, format!("check `{c}` needs `{what}`"))),
            (true, false) => Ok(false),
        }
    };
    let tol = cfg.raw.tolerances.identity;
    let mut out = Outcome::default();

    let fiber_checks = wanted("homogeneity") || wanted("trace");
    if fiber_checks {
        let pts = fiber_points(cfg)?;
        if wanted("homogeneity") {
            out.reports.push(homogeneity_report(cfg, &pts)?);
        }
        if wanted("trace") {
            out.reports.push(trace_report(cfg, &pts)?);
        }
    }

    let has_section = cfg.section.is_some();
    let has_field = cfg.field.is_some();
    let run_dos = needs("dos", has_section, "section")?;
    let run_lemma = needs(
        "lemma",
        has_section && has_field,
        if has_section { "field" } else { "section" },
    )?;
    let run_oap = needs(
        "oap",
        has_section && has_field,
        if has_section { "field" } else { "section" },
    )?;
    let run_hud = needs(
        "hud",
        has_section && cfg.potential.is_some(),
        if has_section { "field.gradient_of" } else { "section" },
    )?;
    if !(run_dos || run_lemma || run_oap || run_hud) {
        return Ok(finish(cfg, opts, out));
    }
    let s = cfg.require_section()?;
    let xs = base_points(cfg, s)?;

    if run_dos {
        let rows = map_points(&xs, |x| -> Result<[f64; 3], GeometryError> {
            let d = connection_difference(&cfg.spec, s, x)?;
            Ok([d.residual, d.scale, corollary_check(&cfg.spec, s, x)?.residual])
        })?;
        let (res, scale, cor) = (
            max_of(rows.iter().map(|r| r[0])),
            max_of(rows.iter().map(|r| r[1])),
            max_of(rows.iter().map(|r| r[2])),
        );
        let mut r = VerificationReport::new("identities_connection_difference");
        r.payload = Obj::new()
            .num("max_residual", res)
            .num("max_side", scale)
            .num("max_trace_residual", cor)
            .num("tolerance", tol)
            .set("points", xs.len())
            .into();
        r.passed = res <= tol && cor <= tol;
        out.reports.push(r);
    }
    if run_lemma {
        let z = cfg.require_field()?;
        let res = max_of(map_points(&xs, |x| {
            lemma_chain(&cfg.spec, z, s, x).map(|c| c.residual)
        })?);
        let mut r = VerificationReport::new("identities_chain_lemma");
        r.payload = Obj::new()
            .num("max_residual", res)
            .num("tolerance", tol)
            .set("points", xs.len())
            .into();
        r.passed = res <= tol;
        out.reports.push(r);
    }
    if run_oap {
        let z = cfg.require_field()?;
        let terms = map_points(&xs, |x| divergence_oap(&cfg.spec, z, s, x))?;
        let res = max_of(terms.iter().map(|t| t.residual()));
        let ablation = max_of(terms.iter().map(|t| (t.ablated_residual() - t.mean_cartan.abs()).abs()));
        let mut r = VerificationReport::new("identities_divergence_formula");
        r.payload = Obj::new()
            .num("max_residual", res)
            .num("max_mean_cartan_term", max_of(terms.iter().map(|t| t.mean_cartan)))
            .num(
                "max_ablated_residual",
                max_of(terms.iter().map(|t| t.ablated_residual())),
            )
            .num("max_ablation_mismatch", ablation)
            .num("tolerance", tol)
            .set("points", xs.len())
            .into();
        r.passed = res <= tol;
        out.reports.push(r);
    }
    if run_hud {
        let f = cfg.potential.as_ref().expect("checked above");
        let mut r = VerificationReport::new("identities_hud");
        match map_points(&xs, |x| hud_terms(&cfg.spec, f, s, x)) {
            Ok(terms) => {
                let res = max_of(terms.iter().map(|t| t.residual()));
                // the common value vanishes wherever s is pregeodesic
                let vanishing = max_of(terms.iter().filter(|t| t.pregeodesic_defect <= tol).map(|t| t.chain));
                r.payload = Obj::new()
                    .num("max_residual", res)
                    .num("max_value", max_of(terms.iter().map(|t| t.chain)))
                    .num("max_value_where_pregeodesic", vanishing)
                    .num(
                        "max_pregeodesic_defect",
                        max_of(terms.iter().map(|t| t.pregeodesic_defect)),
                    )
                    .num("max_killing_residual", max_of(terms.iter().map(|t| t.killing_residual)))
                    .num("tolerance", tol)
                    .set("points", xs.len())
                    .into();
                r.passed = res <= tol && vanishing <= tol;
            }
            Err(GeometryError::Precondition(msg)) => {
                r.payload = Obj::new().set("refused", msg).into();
                r.passed = false;
                out.refused = true;
            }
            Err(e) => return Err(e.into()),
        }
        out.reports.push(r);
    }
    Ok(finish(cfg, opts, out))
}

fn orders(cfg: &Prepared, opts: &RunOptions) -> Vec<usize> {
    opts.orders.clone().unwrap_or_else(|| cfg.orders())
}

fn divergence_table(out: &DivergenceOutcome) -> Table {
    Table {
        header: vec!["order", "volume", "boundary", "oracle", "residual"],
        rows: out
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.order as f64,
                    r.volume,
                    r.boundary,
                    r.oracle.unwrap_or(f64::NAN),
                    r.residual(),
                ]
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Theorem {
    Rund,
    Finsler,
}

pub fn cmd_divergence(cfg: &Prepared, opts: &RunOptions, theorem: Theorem) -> Result<Outcome, CliError> {
    let p = DivergenceProblem {
        spec: &cfg.spec,
        field: cfg.require_field()?,
        section: cfg.require_section()?,
        domain: cfg.require_domain()?,
    };
    let tol = cfg.raw.tolerances.divergence();
    let orders = orders(cfg, opts);
    let result = match theorem {
        Theorem::Rund => verify_divergence_rund(&p, &orders, tol)?,
        Theorem::Finsler => {
            let fo = FinslerOptions {
                seeds: cfg.raw.faces.as_ref().map(|f| f.seeds.clone()),
                seed_scale: opts.seed_scale,
                force: opts.force,
            };
            verify_divergence_finsler(&p, &orders, &fo, tol)?
        }
    };
    Ok(finish(
        cfg,
        opts,
        Outcome {
            table: Some(divergence_table(&result)),
            reports: vec![result.to_report()],
            refused: false,
        },
    ))
}

pub fn cmd_energy(cfg: &Prepared, opts: &RunOptions) -> Result<Outcome, CliError> {
    let energy = cfg.raw.energy.clone().unwrap_or(crate::config::EnergyConfig {
        axis: 0,
        slice_seed: None,
        lateral_seeds: None,
    });
    let p = EnergyProblem {
        spec: &cfg.spec,
        field: cfg.require_field()?,
        section: cfg.require_section()?,
        slab: cfg.require_domain()?,
        axis: energy.axis,
        slice_seed: energy.slice_seed,
        lateral_seeds: energy.lateral_seeds,
    };
    let result = two_slice_drift(&p, &orders(cfg, opts), cfg.raw.tolerances.energy(), opts.force)?;
    let table = Table {
        header: vec!["order", "energy0", "energy1", "lateral", "volume", "drift"],
        rows: result
            .rows
            .iter()
            .map(|r| vec![r.order as f64, r.energy0, r.energy1, r.lateral, r.volume, r.drift()])
            .collect(),
    };
    Ok(finish(
        cfg,
        opts,
        Outcome {
            reports: vec![result.to_report()],
            table: Some(table),
            refused: false,
        },
    ))
}

/// Top-level JSON document of a run.
pub fn document(command: &str, out: &Outcome) -> Value {
    Obj::new()
        .set("command", command)
        .set("passed", out.reports.iter().all(|r| r.passed))
        .set(
            "reports",
            out.reports.iter().map(VerificationReport::to_value).collect::<Vec<_>>(),
        )
        .into()
}
