//! Distance matrices and the scale-adjusted biLipschitz distortion.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::spectral::matrix_power;

/// Reference distances at or below this are not admitted as pairs.
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;
/// Stand-in for an infinite distortion in aggregate statistics.
pub const COLLAPSE_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    /// Diffusion distance at integer time `t`.
    Diffusion(usize),
    /// Euclidean distance between the original points.
    EuclideanAmbient,
    /// Euclidean distance between embedded points.
    Embedded,
}

/// Symmetric `N x N` distance matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    entries: DMatrix<f64>,
    kind: DistanceKind,
}

impl DistanceMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn with_kind(mut self, kind: DistanceKind) -> Self {
        self.kind = kind;
        self
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            entries: &self.entries * c,
            kind: self.kind,
        }
    }
}

/// Euclidean distances between rows; the upper triangle is computed and mirrored.
fn row_distances(rows: &DMatrix<f64>) -> DMatrix<f64> {
    let n = rows.nrows();
    let dim = rows.ncols();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    let mut sq = 0.0;
                    for a in 0..dim {
                        let d = rows[(i, a)] - rows[(j, a)];
                        sq += d * d;
                    }
                    sq.sqrt()
                })
                .collect()
        })
        .collect();
    let mut out = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    out
}

/// Pairwise Euclidean distances between the rows of `coords`.
pub fn pairwise_euclidean(coords: &DMatrix<f64>) -> DistanceMatrix {
    DistanceMatrix {
        entries: row_distances(coords),
        kind: DistanceKind::Embedded,
    }
}

/// Diffusion distance at time `t`: distances between the rows of `A^t`.
pub fn diffusion_distance(a: &KernelMatrix, t: usize) -> Result<DistanceMatrix> {
    if t == 0 {
        return Err(Error::InvalidParameter("diffusion time must be at least 1".into()));
    }
    let powered = matrix_power(a.entries(), t);
    Ok(DistanceMatrix {
        entries: row_distances(&powered),
        kind: DistanceKind::Diffusion(t),
    })
}

/// Result of [`bilipschitz_distortion`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    /// Max dilation over min dilation; `+inf` on collapse.
    pub value: f64,
    /// Some admitted pair was mapped to a single point.
    pub collapsed: bool,
    pub admitted_pairs: usize,
}

impl Distortion {
    /// Natural log of the distortion, with infinity replaced by [`COLLAPSE_CAP`].
    pub fn log_capped(&self) -> f64 {
        self.value.min(COLLAPSE_CAP).ln()
    }
}

/// Smallest `L` with `c d(x,y) <= |f(x) - f(y)| <= c L d(x,y)` over all pairs
/// whose reference distance exceeds `zero_tol`.
pub fn bilipschitz_distortion(
    embedded: &DistanceMatrix,
    reference: &DistanceMatrix,
    zero_tol: f64,
) -> Result<Distortion> {
    let n = reference.size();
    if embedded.size() != n {
        return Err(Error::InvalidParameter(format!(
            "distance matrices differ in size ({} vs {n})",
            embedded.size()
        )));
    }
    if !(zero_tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("zero_tol must be nonnegative, got {zero_tol}")));
    }
    let (e, r) = (embedded.entries(), reference.entries());
    let (min, max, count) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = (f64::INFINITY, 0.0_f64, 0usize);
            for j in (i + 1)..n {
                let d = r[(i, j)];
                if d > zero_tol {
                    let ratio = e[(i, j)] / d;
                    acc.0 = acc.0.min(ratio);
                    acc.1 = acc.1.max(ratio);
                    acc.2 += 1;
                }
            }
            acc
        })
        .reduce(
            || (f64::INFINITY, 0.0, 0),
            |a, b| (a.0.min(b.0), a.1.max(b.1), a.2 + b.2),
        );
    if count == 0 {
        return Err(Error::DegenerateReference { zero_tol });
    }
    if min == 0.0 {
        return Ok(Distortion {
            value: f64::INFINITY,
            collapsed: true,
            admitted_pairs: count,
        });
    }
    Ok(Distortion {
        value: max / min,
        collapsed: false,
        admitted_pairs: count,
    })
}
