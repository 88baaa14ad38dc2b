//! Seeded rejection sampling of admissible fiber points and base points.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::catalog::LagrangianSpec;
use crate::connections::SectionField;
use crate::error::{GeometryError, Result};
use crate::integration::LocalMetric;
use crate::tensors::FiberPoint;

/// Rejection attempts allowed per requested sample.
const ATTEMPTS_PER_SAMPLE: usize = 2000;

/// Where to draw from: `x` uniform in a box, `y` uniform in a cube around
/// `y_center`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRegion {
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    #[serde(default)]
    pub y_center: Vec<f64>,
    #[serde(default = "default_radius")]
    pub y_radius: f64,
    /// Reject fiber points with some `|y^i|` below this.
    #[serde(default)]
    pub min_component: f64,
    /// Reject points where the 2-norm condition number of `g` exceeds this.
    #[serde(default)]
    pub max_condition: Option<f64>,
}

fn default_radius() -> f64 {
    0.5
}

impl SampleRegion {
    pub fn new(x_lower: &[f64], x_upper: &[f64], y_center: &[f64], y_radius: f64) -> SampleRegion {
        SampleRegion {
            x_lower: x_lower.to_vec(),
            x_upper: x_upper.to_vec(),
            y_center: y_center.to_vec(),
            y_radius,
            min_component: 0.0,
            max_condition: None,
        }
    }

    pub fn with_min_component(mut self, m: f64) -> Self {
        self.min_component = m;
        self
    }

    pub fn with_max_condition(mut self, c: f64) -> Self {
        self.max_condition = Some(c);
        self
    }

    fn accepts(&self, spec: &LagrangianSpec, x: &[f64], y: &[f64]) -> bool {
        if y.iter().any(|v| v.abs() < self.min_component) {
            return false;
        }
        let Ok(m) = LocalMetric::at(spec, x, y) else {
            return false;
        };
        match self.max_condition {
            None => true,
            Some(limit) => {
                let n = y.len();
                let sv = DMatrix::from_row_slice(n, n, &m.g).singular_values();
                sv.max() <= limit * sv.min()
            }
        }
    }

    fn check(&self, dim: usize, need_y: bool) -> Result<()> {
        let bad = |what: &str| Err(GeometryError::Invalid(format!("sample region: {what}")));
        if self.x_lower.len() != dim || self.x_upper.len() != dim {
            return bad("x box has the wrong dimension");
        }
        if self.x_lower.iter().zip(&self.x_upper).any(|(a, b)| !(a <= b)) {
            return bad("x_lower must not exceed x_upper");
        }
        if need_y && self.y_center.len() != dim {
            return bad("y_center has the wrong dimension");
        }
        if !(self.y_radius >= 0.0) {
            return bad("y_radius must be non-negative");
        }
        Ok(())
    }

    fn draw_x(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.x_lower
            .iter()
            .zip(&self.x_upper)
            .map(|(&a, &b)| if a == b { a } else { rng.gen_range(a..=b) })
            .collect()
    }
}

fn exhausted(count: usize) -> GeometryError {
    GeometryError::Precondition(format!(
        "could not draw {count} admissible samples within {} attempts each",
        ATTEMPTS_PER_SAMPLE
    ))
}

/// `count` admissible fiber points with a nondegenerate metric.
pub fn sample_fiber_points(
    spec: &LagrangianSpec,
    region: &SampleRegion,
    count: usize,
    seed: u64,
) -> Result<Vec<FiberPoint>> {
    let n = spec.dim();
    region.check(n, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > ATTEMPTS_PER_SAMPLE * count.max(1) {
            return Err(exhausted(count));
        }
        let x = region.draw_x(&mut rng);
        let y: Vec<f64> = region
            .y_center
            .iter()
            .map(|&c| c + region.y_radius * rng.gen_range(-1.0..=1.0))
            .collect();
        if region.accepts(spec, &x, &y) {
            out.push(FiberPoint::new(&x, &y));
        }
    }
    Ok(out)
}

/// `count` base points at which `s(x)` is admissible with a nondegenerate
/// metric.
pub fn sample_base_points(
    spec: &LagrangianSpec,
    section: &SectionField,
    region: &SampleRegion,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    region.check(spec.dim(), false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > ATTEMPTS_PER_SAMPLE * count.max(1) {
            return Err(exhausted(count));
        }
        let x = region.draw_x(&mut rng);
        let Ok(s) = section.value(&x, spec.params()) else {
            continue;
        };
        if region.accepts(spec, &x, &s) {
            out.push(x);
        }
    }
    Ok(out)
}
