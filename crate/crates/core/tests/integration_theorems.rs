mod common;

use common::rng;
use finsler_core::catalog::{build_lagrangian, LagrangianParams, LagrangianSpec};
use finsler_core::connections::{FiberVectorField, SectionField};
use finsler_core::expr::Params;
use finsler_core::integration::*;
use finsler_core::quadrature::{face_rule, faces, pairwise_sum, weighted_sum, Face};
use finsler_core::sampling::{sample_fiber_points, SampleRegion};
use finsler_core::GeometryError;
use rand::Rng;

fn section(t: &[&str]) -> SectionField {
    SectionField::parse("s", t, t.len(), &Params::new()).unwrap()
}

fn field(t: &[&str]) -> FiberVectorField {
    FiberVectorField::components(t, t.len(), &Params::new()).unwrap()
}

fn rel_norm(a: &[f64], b: &[f64]) -> f64 {
    common::max_abs_diff(a, b) / b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300)
}

fn fiber_catalog() -> Vec<(&'static str, LagrangianSpec, SampleRegion)> {
    vec![
        (
            "minkowski",
            common::minkowski(4),
            SampleRegion::new(&[-1.0; 4], &[1.0; 4], &[0.0; 4], 1.0),
        ),
        (
            "friedmann",
            common::friedmann("exp(x0)"),
            SampleRegion::new(&[-1.0; 4], &[1.0; 4], &[0.0; 4], 1.0),
        ),
        (
            "affine_sphere",
            common::affine("exp(x0)"),
            SampleRegion::new(&[0.0, -1.0, -1.0, -1.0], &[1.0; 4], &[1.0, 0.0, 0.0, 0.0], 0.6)
                .with_max_condition(100.0),
        ),
        (
            "quartic",
            common::quartic(4),
            SampleRegion::new(&[-0.5; 4], &[0.5; 4], &[0.6, 1.0, -0.8, 1.0], 0.6).with_min_component(0.2),
        ),
    ]
}

#[test]
fn legendre_round_trip_and_homogeneity() {
    for (id, spec, region) in fiber_catalog() {
        let mut r = rng(8);
        for p in sample_fiber_points(&spec, &region, 50, 9).unwrap() {
            let omega = legendre_map(&spec, &p.x, &p.y).unwrap();
            let doubled: Vec<f64> = p.y.iter().map(|v| 2.0 * v).collect();
            let omega2: Vec<f64> = omega.iter().map(|v| 2.0 * v).collect();
            assert!(
                rel_norm(&legendre_map(&spec, &p.x, &doubled).unwrap(), &omega2) <= 1e-10,
                "{id}"
            );

            // perturbed seed in the same cone component
            let seed: Vec<f64> = p.y.iter().map(|v| v * (1.0 + r.gen_range(-0.05..0.05))).collect();
            if !spec.is_admissible(&p.x, &seed)
                || spec.component(&p.x, &seed).unwrap() != spec.component(&p.x, &p.y).unwrap()
            {
                continue;
            }
            let sol = legendre_invert(&spec, &p.x, &omega, &seed).unwrap();
            assert!(
                rel_norm(&legendre_map(&spec, &p.x, &sol.v).unwrap(), &omega) <= 1e-10,
                "{id}"
            );
            assert_eq!(
                spec.component(&p.x, &sol.v).unwrap(),
                spec.component(&p.x, &seed).unwrap()
            );
        }
    }
}

#[test]
fn legendre_map_is_the_fiber_gradient_on_quartic() {
    let spec = common::quartic(4);
    let region = SampleRegion::new(&[-0.5; 4], &[0.5; 4], &[0.6, 1.0, -0.8, 1.0], 0.6).with_min_component(0.2);
    for p in sample_fiber_points(&spec, &region, 30, 4).unwrap() {
        let ell = legendre_map(&spec, &p.x, &p.y).unwrap();
        let l = |y: &[f64]| spec.value(&p.x, y).unwrap();
        let grad: Vec<f64> = (0..4).map(|k| common::fd5(&l, &p.y, k, 1e-4)).collect();
        assert!(common::max_abs_diff(&ell, &grad) <= 1e-9 * (1.0 + ell.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
    }
}

#[test]
fn two_dimensional_normal_is_not_unique() {
    // L = 3 y0 y1 for y0 > 0 and L = -y0 y1 for y0 < 0
    let p = LagrangianParams {
        expr: Some("y0*y1 + 2*abs(y0)*y1".into()),
        ..Default::default()
    };
    let spec = build_lagrangian("custom_expression", 2, &p, &Params::new()).unwrap();
    let x = [0.0, 0.0];
    let omega = [1.0, 1.0];
    let a = legendre_invert(&spec, &x, &omega, &[0.5, 0.2]).unwrap();
    let b = legendre_invert(&spec, &x, &omega, &[-0.5, -1.5]).unwrap();
    assert!(common::max_abs_diff(&a.v, &[1.0 / 3.0, 1.0 / 3.0]) <= 1e-12, "{a:?}");
    assert!(common::max_abs_diff(&b.v, &[-1.0, -1.0]) <= 1e-12, "{b:?}");
    for v in [&a.v, &b.v] {
        assert!(common::max_abs_diff(&legendre_map(&spec, &x, v).unwrap(), &omega) <= 1e-12);
    }
    assert_ne!(spec.component(&x, &a.v).unwrap(), spec.component(&x, &b.v).unwrap());
}

#[test]
fn affine_sphere_time_face_normal() {
    let spec = common::affine("exp(x0)");
    let face = Face { axis: 0, upper: true };
    let mut r = rng(12);
    for _ in 0..20 {
        let x = [
            r.gen_range(0.0..1.0),
            r.gen_range(-1.0..1.0),
            r.gen_range(-1.0..1.0),
            r.gen_range(-1.0..1.0),
        ];
        let n = face_normal(&spec, face, &x, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(n.normalized);
        let ln = legendre_map(&spec, &x, &n.n).unwrap();
        // T S = span of spatial coordinate vectors lies in ker g_n(n, ·)
        assert!(ln[1..].iter().all(|v| v.abs() <= 1e-10), "{ln:?}");
        let gnn: f64 = ln.iter().zip(&n.n).map(|(a, b)| a * b).sum();
        assert!((gnn + 1.0).abs() <= 1e-10);
        let mu = LocalMetric::at(&spec, &x, &n.n).unwrap().det.abs().sqrt();
        let nu = induced_volume_weight(&spec, &n.n, &x, face, mu, None).unwrap();
        assert!((nu - interior_weight(&n.n, face, mu)).abs() <= 1e-10 * nu.abs(), "{nu}");
        let tilted = [1.0, 0.3, -0.2, 0.5];
        let nu2 = induced_volume_weight(&spec, &n.n, &x, face, mu, Some(&tilted)).unwrap();
        assert!((nu - nu2).abs() <= 1e-12 * nu.abs());
    }
}

#[test]
fn friedmann_time_face_normal_is_the_time_direction() {
    let spec = common::friedmann("exp(x0)");
    let n = face_normal(
        &spec,
        Face { axis: 0, upper: false },
        &[0.4, 0.1, 0.2, 0.3],
        &[-1.0, 0.1, 0.0, 0.0],
    )
    .unwrap();
    assert!(n.normalized);
    assert!(common::max_abs_diff(&n.n, &[-1.0, 0.0, 0.0, 0.0]) <= 1e-12, "{n:?}");
}

/// `∫_{∂D} σ √|det h| Z^i` over the faces of a box, `h = s*g`: the
/// Riemannian flux from the coordinate form of the divergence theorem.
fn classical_flux(spec: &LagrangianSpec, s: &SectionField, z: &FiberVectorField, d: &BoxDomain, order: usize) -> f64 {
    let per_face: Vec<f64> = faces(d.dim())
        .into_iter()
        .map(|face| {
            let (pts, w) = face_rule(&d.lower, &d.upper, &vec![order; d.dim()], face);
            let vals: Vec<f64> = pts
                .iter()
                .map(|x| {
                    let sv = s.value(x, spec.params()).unwrap();
                    let mu = LocalMetric::at(spec, x, &sv).unwrap().det.abs().sqrt();
                    face.sigma() * field_value(spec, z, x, &sv).unwrap()[face.axis] * mu
                })
                .collect();
            weighted_sum(&vals, &w)
        })
        .collect();
    pairwise_sum(&per_face)
}

#[test]
fn rund_theorem_on_friedmann_matches_the_classical_flux() {
    for dim in [3, 4] {
        let spec = common::friedmann_dim("exp(x0)", dim);
        let t: Vec<String> = (0..dim).map(|i| if i == 0 { "1".into() } else { "0".into() }).collect();
        let s = SectionField::parse("s", &t, dim, &Params::new()).unwrap();
        let zt: Vec<String> = (0..dim)
            .map(|i| format!("x{}^2 - 0.5*x{i}*x{} + 0.3", (i + 1) % dim, (i + dim - 1) % dim))
            .collect();
        let z = FiberVectorField::components(&zt, dim, &Params::new()).unwrap();
        let domain = BoxDomain::new(&vec![0.0; dim], &vec![1.0; dim]).unwrap();
        let p = DivergenceProblem {
            spec: &spec,
            field: &z,
            section: &s,
            domain: &domain,
        };
        let out = verify_divergence_rund(&p, &[4, 8], DivergenceTolerances::default()).unwrap();
        let row = out.finest();
        let oracle = classical_flux(&spec, &s, &z, &domain, 8);
        assert!(row.residual() <= 1e-8, "{row:?}");
        assert!(
            (row.boundary - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()),
            "{} vs {oracle}",
            row.boundary
        );
        assert!(out.passed());
    }
}

#[test]
fn rund_theorem_on_quartic_self_converges() {
    let spec = common::quartic(3);
    let s = section(&["0.8 + 0.1*x1", "1 + 0.2*x0*x2", "-0.9 + 0.1*sin(x0)"]);
    let z = field(&["x0*y1 + y2^2/y0", "y0*x2 - 0.3*y1", "x1^2*y2/y1 + 0.2"]);
    let domain = BoxDomain::new(&[0.0; 3], &[1.0; 3]).unwrap();
    let p = DivergenceProblem {
        spec: &spec,
        field: &z,
        section: &s,
        domain: &domain,
    };
    let out = verify_divergence_rund(&p, &[4, 8, 12], DivergenceTolerances::default()).unwrap();
    let r: Vec<f64> = out.rows.iter().map(|row| row.residual()).collect();
    assert!(out.monotone(), "{r:?}");
    assert!(r[2] <= 1e-7, "{r:?}");
    // the I-term is present on this spec: the Finsler volume side without it differs
    assert!(out.finest().volume.abs() > 1e-3);
}

fn affine_scenario() -> (LagrangianSpec, SectionField, FiberVectorField, BoxDomain) {
    (
        common::affine_skewed("exp(x0)"),
        section(&["1", "1 + 0.02*x1", "1 + 0.01*x0", "1 + 0.02*sin(x2)"]),
        field(&["y0*x1", "y1^2/y0 + x2", "x0*y2", "y3 + x1*x3"]),
        BoxDomain::new(&[0.0; 4], &[0.3; 4]).unwrap(),
    )
}

#[test]
fn finsler_theorem_on_the_affine_sphere() {
    let (spec, s, z, domain) = affine_scenario();
    let p = DivergenceProblem {
        spec: &spec,
        field: &z,
        section: &s,
        domain: &domain,
    };
    let tol = DivergenceTolerances::default();
    let out = verify_divergence_finsler(&p, &[4, 8], &FinslerOptions::default(), tol).unwrap();
    let row = out.finest();
    assert!(out.max_mean_cartan.unwrap() <= 1e-9);
    assert!(out.det_spread.unwrap() <= 1e-8);
    // boundary formulas agree independently of the volume side
    for r in &out.rows {
        assert!((r.boundary - r.oracle.unwrap()).abs() <= 1e-9, "{r:?}");
    }
    assert!(row.max_pairwise() <= 1e-7, "{row:?}");
    assert!(row.volume.abs() > 1e-3, "scenario is not trivial");
    assert!(out.passed() && !out.forced);

    // Rund's volume side coincides when I = 0
    let rund = verify_divergence_rund(&p, &[8], tol).unwrap();
    assert!((rund.finest().volume - row.volume).abs() <= 1e-9);

    // the normal scale drops out
    let scaled = FinslerOptions {
        seed_scale: Some(5.0),
        ..Default::default()
    };
    let out5 = verify_divergence_finsler(&p, &[8], &scaled, tol).unwrap();
    assert!((out5.finest().boundary - row.boundary).abs() <= 1e-10 * row.boundary.abs().max(1.0));
}

#[test]
fn finsler_theorem_on_minkowski_with_divergence_free_field() {
    let spec = common::minkowski(4);
    let s = section(&["1", "0.1*x1", "0", "0.2"]);
    let z = field(&["x1*x2", "x0 - x3^2", "x1 + x0", "x2*x0"]);
    let domain = BoxDomain::new(&[0.0; 4], &[1.0; 4]).unwrap();
    let p = DivergenceProblem {
        spec: &spec,
        field: &z,
        section: &s,
        domain: &domain,
    };
    let out = verify_divergence_finsler(&p, &[3], &FinslerOptions::default(), Default::default()).unwrap();
    let row = out.finest();
    assert!(
        row.volume.abs() <= 1e-10 && row.boundary.abs() <= 1e-10 && row.oracle.unwrap().abs() <= 1e-10,
        "{row:?}"
    );
}

#[test]
fn finsler_theorem_refuses_nonvanishing_mean_cartan() {
    let spec = common::quartic(3);
    let s = section(&["0.8 + 0.1*x1", "1 + 0.2*x0*x2", "-0.9 + 0.1*sin(x0)"]);
    let z = field(&["x0*y1", "y0", "y2"]);
    let domain = BoxDomain::new(&[0.0; 3], &[1.0; 3]).unwrap();
    let p = DivergenceProblem {
        spec: &spec,
        field: &z,
        section: &s,
        domain: &domain,
    };
    let err = verify_divergence_finsler(&p, &[4], &FinslerOptions::default(), Default::default()).unwrap_err();
    assert!(matches!(err, GeometryError::GateRefused(_)), "{err:?}");
    // past the gate, coordinate conormals have no quartic preimage off the
    // hyperplanes y^i = 0, so Newton leaves the cone component
    let forced = FinslerOptions {
        force: true,
        ..Default::default()
    };
    let err = verify_divergence_finsler(&p, &[4], &forced, Default::default()).unwrap_err();
    assert!(
        matches!(
            err,
            GeometryError::LeftCone { .. } | GeometryError::NoConvergence { .. }
        ),
        "{err:?}"
    );
}
