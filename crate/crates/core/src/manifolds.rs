//! Samplers for the synthetic test manifolds.

use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::PointCloud;
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldKind {
    /// Unit circle in `R^2`.
    Circle,
    /// `S^1 x r S^1` in `R^4`.
    FlatTorus { r: f64 },
    /// Klein bottle in `R^4` with radii `a > b > 0`.
    Klein { a: f64, b: f64 },
    /// Unit circle with fixed planar outliers appended after the circle points.
    CircleWithOutliers { outliers: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub n: usize,
    pub seed: u64,
}

impl ManifoldSpec {
    pub fn new(kind: ManifoldKind, n: usize, seed: u64) -> Self {
        Self { kind, n, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("sample size must be at least 1".into()));
        }
        match &self.kind {
            ManifoldKind::Circle => {}
            ManifoldKind::FlatTorus { r } => {
                if !(*r > 1.0 && r.is_finite()) {
                    return Err(Error::InvalidSpec(format!("torus radius r must exceed 1, got {r}")));
                }
            }
            ManifoldKind::Klein { a, b } => {
                if !(a.is_finite() && *b > 0.0 && a > b) {
                    return Err(Error::InvalidSpec(format!(
                        "klein radii need a > b > 0, got a={a}, b={b}"
                    )));
                }
            }
            ManifoldKind::CircleWithOutliers { outliers } => {
                if outliers.len() > self.n {
                    return Err(Error::InvalidSpec(format!(
                        "{} outliers exceed sample size {}",
                        outliers.len(),
                        self.n
                    )));
                }
                if outliers.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("outlier coordinates must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ManifoldKind::Circle => "circle".to_string(),
            ManifoldKind::FlatTorus { r } => format!("flat_torus(r={r})"),
            ManifoldKind::Klein { a, b } => format!("klein(a={a},b={b})"),
            ManifoldKind::CircleWithOutliers { outliers } => {
                let pts: Vec<String> = outliers.iter().map(|[x, y]| format!("({x},{y})")).collect();
                format!("circle_with_outliers[{}]", pts.join(";"))
            }
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::CircleWithOutliers { .. } => 2,
            ManifoldKind::FlatTorus { .. } | ManifoldKind::Klein { .. } => 4,
        }
    }
}

pub fn torus_point(u: f64, v: f64, r: f64) -> Vec<f64> {
    vec![u.cos(), u.sin(), r * v.cos(), r * v.sin()]
}

pub fn klein_point(u: f64, v: f64, a: f64, b: f64) -> Vec<f64> {
    let w = a + b * v.cos();
    vec![
        w * u.cos(),
        w * u.sin(),
        b * v.sin() * (u / 2.0).cos(),
        b * v.sin() * (u / 2.0).sin(),
    ]
}

/// Draws `spec.n` points. Angles are uniform on `[0, 2pi)`; the torus and
/// Klein bottle are uniform in parameter space, not in surface area.
pub fn sample(spec: &ManifoldSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = rng_from(spec.seed);
    let mut angle = move || rng.random::<f64>() * TAU;
    let points: Vec<Vec<f64>> = match &spec.kind {
        ManifoldKind::Circle => (0..spec.n)
            .map(|_| {
                let t = angle();
                vec![t.cos(), t.sin()]
            })
            .collect(),
        ManifoldKind::FlatTorus { r } => (0..spec.n)
            .map(|_| {
                let u = angle();
                let v = angle();
                torus_point(u, v, *r)
            })
            .collect(),
        ManifoldKind::Klein { a, b } => (0..spec.n)
            .map(|_| {
                let u = angle();
                let v = angle();
                klein_point(u, v, *a, *b)
            })
            .collect(),
        ManifoldKind::CircleWithOutliers { outliers } => {
            let mut pts: Vec<Vec<f64>> = (0..spec.n - outliers.len())
                .map(|_| {
                    let t = angle();
                    vec![t.cos(), t.sin()]
                })
                .collect();
            pts.extend(outliers.iter().map(|p| p.to_vec()));
            pts
        }
    };
    Ok(PointCloud::new(points, spec.label())?.with_seed(Some(spec.seed)))
}
