#![allow(dead_code)]

use finsler_core::catalog::{build_lagrangian, LagrangianParams, LagrangianSpec};
use finsler_core::connections::{FiberVectorField, SectionField};
use finsler_core::expr::Params;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn minkowski(dim: usize) -> LagrangianSpec {
    build_lagrangian("minkowski", dim, &Default::default(), &Params::new()).unwrap()
}

/// `diag(-1, a², a², a²)` as a `quadratic_metric`.
pub fn friedmann(a: &str) -> LagrangianSpec {
    friedmann_dim(a, 4)
}

/// `diag(-1, a², …)` in `dim` dimensions.
pub fn friedmann_dim(a: &str, dim: usize) -> LagrangianSpec {
    let metric = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| match (i, j) {
                    (0, 0) => "-1".to_string(),
                    (i, j) if i == j => format!("({a})^2"),
                    _ => "0".to_string(),
                })
                .collect()
        })
        .collect();
    let p = LagrangianParams {
        metric: Some(metric),
        ..Default::default()
    };
    build_lagrangian("quadratic_metric", dim, &p, &Params::new()).unwrap()
}

pub fn affine(a: &str) -> LagrangianSpec {
    let p = LagrangianParams {
        a: Some(a.into()),
        ..Default::default()
    };
    build_lagrangian("affine_sphere_friedmann", 4, &p, &Params::new()).unwrap()
}

/// Linear chart in which every coordinate conormal of the affine-sphere
/// space is timelike: `x_phys = A u` with `A⁻¹` rows `(1,0,0,0)`,
/// `(1,.3,0,0)`, `(1,0,.3,0)`, `(1,0,0,.3)`.
pub fn skew_chart() -> Vec<Vec<f64>> {
    let (t, d) = (-10.0 / 3.0, 10.0 / 3.0);
    vec![
        vec![1.0, 0.0, 0.0, 0.0],
        vec![t, d, 0.0, 0.0],
        vec![t, 0.0, d, 0.0],
        vec![t, 0.0, 0.0, d],
    ]
}

pub fn affine_skewed(a: &str) -> LagrangianSpec {
    let p = LagrangianParams {
        a: Some(a.into()),
        chart: Some(skew_chart()),
        ..Default::default()
    };
    build_lagrangian("affine_sphere_friedmann", 4, &p, &Params::new()).unwrap()
}

/// Quartic with coordinate-mixing weights, so that `N`, `Γ`, `I` and `J`
/// are all nonzero.
pub fn quartic(dim: usize) -> LagrangianSpec {
    let weights = (0..dim)
        .map(|i| format!("1 + 0.{}*x{}^2", i + 1, (i + 1) % dim))
        .collect();
    let p = LagrangianParams {
        weights: Some(weights),
        ..Default::default()
    };
    build_lagrangian("quartic", dim, &p, &Params::new()).unwrap()
}

/// Closed-form Levi-Civita symbols `Γ^α_{βγ}` (index `[α][β][γ]`) of
/// `-dt² + a(t)² δ_ij dx^i dx^j`, given `a` and `ȧ` at the point.
pub fn friedmann_christoffels(a: f64, adot: f64) -> [[[f64; 4]; 4]; 4] {
    let mut g = [[[0.0; 4]; 4]; 4];
    for i in 1..4 {
        g[0][i][i] = a * adot;
        g[i][0][i] = adot / a;
        g[i][i][0] = adot / a;
    }
    g
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn coeff(rng: &mut ChaCha8Rng, scale: f64) -> String {
    format!("{:.6}", rng.gen_range(-scale..scale))
}

/// Smooth random section `s^α = base_α + linear + small trig term`.
pub fn random_section(rng: &mut ChaCha8Rng, base: &[f64], scale: f64) -> SectionField {
    let n = base.len();
    let texts: Vec<String> = (0..n)
        .map(|a| {
            let lin: Vec<String> = (0..n).map(|m| format!("({})*x{m}", coeff(rng, scale))).collect();
            format!(
                "{} + {} + ({})*sin(x{}) + ({})*x{}*x{}",
                base[a],
                lin.join(" + "),
                coeff(rng, scale),
                (a + 1) % n,
                coeff(rng, scale),
                a,
                (a + 2) % n
            )
        })
        .collect();
    SectionField::parse("s", &texts, n, &Params::new()).unwrap()
}

/// Random `y`-dependent field, smooth wherever `y0 ≠ 0`.
pub fn random_field(rng: &mut ChaCha8Rng, n: usize) -> FiberVectorField {
    let texts: Vec<String> = (0..n)
        .map(|m| {
            format!(
                "({})*y{m} + ({})*x{}*y{} + ({})*y{}^2/y0 + ({})*x{m}^2 + ({})*cos(x{})*y{}",
                coeff(rng, 1.0),
                coeff(rng, 1.0),
                (m + 1) % n,
                (m + 2) % n,
                coeff(rng, 1.0),
                (m + 1) % n,
                coeff(rng, 1.0),
                coeff(rng, 1.0),
                (m + 3) % n,
                m
            )
        })
        .collect();
    FiberVectorField::components(&texts, n, &Params::new()).unwrap()
}

/// Random smooth scalar on the fiber, nonsingular wherever `y0 ≠ 0`.
pub fn random_scalar(rng: &mut ChaCha8Rng, n: usize) -> String {
    let mut terms = Vec::new();
    for a in 0..n {
        for b in a..n {
            terms.push(format!("({})*y{a}*y{b}", coeff(rng, 1.0)));
        }
        terms.push(format!("({})*x{}*y{a}", coeff(rng, 1.0), (a + 1) % n));
    }
    terms.push(format!("({})*y1^3/y0", coeff(rng, 1.0)));
    terms.join(" + ")
}

/// Central five-point first derivative of `f` along `e_k`.
pub fn fd5(f: &dyn Fn(&[f64]) -> f64, p: &[f64], k: usize, h: f64) -> f64 {
    let at = |t: f64| {
        let mut q = p.to_vec();
        q[k] += t;
        f(&q)
    };
    (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
