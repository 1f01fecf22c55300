//! Gaussian affinity matrices and their symmetric and bistochastic normalizations.
//!
//! The raw kernel is `K_ij = exp(-|x_i - x_j|^2 / eps)`. Two symmetric
//! heat-kernel approximations are built from it:
//!
//! * the symmetric normalization, which divides out the sampling density
//!   `q = K 1` and then symmetrically rescales the row sums of the
//!   density-corrected kernel, and
//! * the bistochastic normalization `D^-1 K D^-1`, whose scaling vector is
//!   found by a symmetric Sinkhorn iteration.

use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A finite point set in `R^D`, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
    label: String,
    seed: Option<u64>,
}

impl PointCloud {
    /// Builds a cloud from a list of coordinate vectors.
    pub fn new(points: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("points have dimension 0".into()));
        }
        if let Some(i) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "point {i} has dimension {} (expected {dim})",
                points[i].len()
            )));
        }
        let flat: Vec<f64> = points.into_iter().flatten().collect();
        Self::from_matrix(DMatrix::from_row_slice(n, dim, &flat), label)
    }

    /// Builds a cloud from an `N x D` matrix.
    pub fn from_matrix(points: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        if let Some(idx) = points.iter().position(|v| !v.is_finite()) {
            // column-major index
            let (r, c) = (idx % points.nrows(), idx / points.nrows());
            return Err(Error::InvalidInput(format!(
                "non-finite coordinate at point {r}, axis {c}"
            )));
        }
        Ok(Self {
            points,
            label: label.into(),
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn content_hash(&self) -> u64 {
        hash_matrix(&self.points)
    }
}

/// Which normalization produced a [`KernelMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normalization {
    Raw,
    Symmetric,
    Bistochastic,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Raw => "raw",
            Normalization::Symmetric => "symmetric",
            Normalization::Bistochastic => "bistochastic",
        }
    }
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(Normalization::Raw),
            "symmetric" => Ok(Normalization::Symmetric),
            "bistochastic" => Ok(Normalization::Bistochastic),
            other => Err(Error::InvalidParameter(format!(
                "unknown normalization '{other}'"
            ))),
        }
    }
}

/// A symmetric, entrywise nonnegative `N x N` kernel.
///
/// Symmetry is exact: every constructor either builds entries symmetrically
/// or rejects asymmetric input.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    normalization: Normalization,
    scale_eps: Option<f64>,
}

impl KernelMatrix {
    /// Wraps an existing matrix. It must be square, finite and exactly symmetric.
    pub fn from_matrix(entries: DMatrix<f64>, normalization: Normalization) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "kernel must be square and nonempty, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("kernel has non-finite entries".into()));
        }
        for j in 0..n {
            for i in (j + 1)..n {
                if entries[(i, j)] != entries[(j, i)] {
                    return Err(Error::InvalidInput(format!(
                        "kernel is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            entries,
            normalization,
            scale_eps: None,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Kernel bandwidth in squared-distance units, when built from a cloud.
    pub fn scale_eps(&self) -> Option<f64> {
        self.scale_eps
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.row_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.entries.column_iter().map(|c| c.iter().sum()).collect()
    }

    /// Hash of the bit patterns of all entries, for pairing checks.
    pub fn content_hash(&self) -> u64 {
        hash_matrix(&self.entries)
    }
}

fn hash_matrix(m: &DMatrix<f64>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    m.nrows().hash(&mut h);
    m.ncols().hash(&mut h);
    for v in m.iter() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Raw Gaussian affinity `exp(-|x_i - x_j|^2 / eps)`.
pub fn affinity(cloud: &PointCloud, eps: f64) -> Result<KernelMatrix> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eps must be positive and finite, got {eps}"
        )));
    }
    let pts = cloud.points();
    if pts.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("cloud has non-finite coordinates".into()));
    }
    let (n, dim) = (pts.nrows(), pts.ncols());
    // Each entry is an independent sum over axes, so row-parallel evaluation
    // is bit-identical to the sequential one.
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut sq = 0.0;
                    for a in 0..dim {
                        let d = pts[(i, a)] - pts[(j, a)];
                        sq += d * d;
                    }
                    (-sq / eps).exp()
                })
                .collect()
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(KernelMatrix {
        entries: DMatrix::from_row_slice(n, n, &flat),
        normalization: Normalization::Raw,
        scale_eps: Some(eps),
    })
}

fn require_raw(k: &KernelMatrix) -> Result<()> {
    if k.normalization != Normalization::Raw {
        return Err(Error::InvalidParameter(format!(
            "expected a raw affinity matrix, got {}",
            k.normalization
        )));
    }
    Ok(())
}

/// Builds `diag(s) M diag(s)` with exact symmetry by computing the upper
/// triangle and mirroring it.
fn symmetric_scale(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = m[(i, j)] * (s[i] * s[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Symmetric normalization of a raw affinity matrix.
///
/// With `q = K 1`, `Kt = diag(1/q) K diag(1/q)` and `v = Kt 1`, returns
/// `diag(1/sqrt v) Kt diag(1/sqrt v)`.
pub fn normalize_symmetric(k: &KernelMatrix) -> Result<KernelMatrix> {
    require_raw(k)?;
    let q = k.row_sums();
    if let Some(i) = q.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::DegenerateRow {
            stage: "density row sum",
            index: i,
        });
    }
    let inv_q: Vec<f64> = q.iter().map(|x| 1.0 / x).collect();
    let kt = symmetric_scale(&k.entries, &inv_q);
    let v: Vec<f64> = kt.row_iter().map(|r| r.iter().sum()).collect();
    if let Some(i) = v.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::DegenerateRow {
            stage: "normalized row sum",
            index: i,
        });
    }
    let inv_sqrt_v: Vec<f64> = v.iter().map(|x| 1.0 / x.sqrt()).collect();
    Ok(KernelMatrix {
        entries: symmetric_scale(&kt, &inv_sqrt_v),
        normalization: Normalization::Symmetric,
        scale_eps: k.scale_eps,
    })
}

/// Fixed-point update used by the balancing loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkhornScheme {
    /// `d_{i+1} = K (1 / d_i)`. Iterates oscillate with period two around
    /// the scaling; the result is the geometric mean of the last two.
    /// Convergence stalls on nearly decomposable kernels (sparse samples).
    Alternating,
    /// `d_{i+1} = sqrt(d_i * K (1 / d_i))`. Same fixed point; for a PSD
    /// kernel the linearized update contracts by at least 1/2 per step.
    GeometricMean,
}

/// Stopping parameters for the Sinkhorn balancing loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Tolerance on `max |d_{i+2} / d_i - 1|`.
    pub delta: f64,
    pub max_iters: usize,
    pub scheme: SinkhornScheme,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            delta: 1e-8,
            max_iters: 100_000,
            scheme: SinkhornScheme::GeometricMean,
        }
    }
}

impl SinkhornOptions {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }
}

/// Outcome of a successful balancing run.
#[derive(Debug, Clone)]
pub struct Balanced {
    pub kernel: KernelMatrix,
    /// Loop iterations after the two initial sweeps.
    pub iterations: usize,
    /// Final value of the stopping statistic.
    pub residual: f64,
    pub scaling: Vec<f64>,
}

/// Bistochastic normalization `diag(d)^-1 K diag(d)^-1`.
pub fn normalize_bistochastic(k: &KernelMatrix, opts: SinkhornOptions) -> Result<KernelMatrix> {
    balance(k, opts).map(|b| b.kernel)
}

/// Symmetric Sinkhorn balancing with iteration diagnostics.
///
/// Starting from `d_0 = 1`, iterates the update selected by `opts.scheme`
/// while `max |d_{i+2}/d_i - 1| > delta`. Only the last three iterates are
/// kept.
pub fn balance(k: &KernelMatrix, opts: SinkhornOptions) -> Result<Balanced> {
    require_raw(k)?;
    if !(opts.delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {}",
            opts.delta
        )));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be positive".into()));
    }
    let n = k.size();
    if let Some(i) = (0..n).position(|i| !(k.entries[(i, i)] > 0.0)) {
        return Err(Error::DegenerateRow {
            stage: "kernel diagonal",
            index: i,
        });
    }

    let step = |d: &DVector<f64>| -> Result<DVector<f64>> {
        let mut next = &k.entries * d.map(|x| 1.0 / x);
        if opts.scheme == SinkhornScheme::GeometricMean {
            next.zip_apply(d, |n, old| *n = (*n * old).sqrt());
        }
        if let Some(i) = next.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::DegenerateRow {
                stage: "balancing vector",
                index: i,
            });
        }
        Ok(next)
    };

    // d_i, d_{i+1}, d_{i+2}
    let mut older = DVector::from_element(n, 1.0);
    let mut prev = step(&older)?;
    let mut cur = step(&prev)?;
    let mut iterations = 0;
    let residual = loop {
        let residual = cur
            .iter()
            .zip(older.iter())
            .map(|(a, b)| (a / b - 1.0).abs())
            .fold(0.0_f64, f64::max);
        if residual <= opts.delta {
            break residual;
        }
        if iterations >= opts.max_iters {
            return Err(Error::ConvergenceFailure {
                iterations,
                residual,
            });
        }
        iterations += 1;
        let next = step(&cur)?;
        older = std::mem::replace(&mut prev, std::mem::replace(&mut cur, next));
    };

    let scaling: Vec<f64> = match opts.scheme {
        SinkhornScheme::Alternating => prev.iter().zip(cur.iter()).map(|(a, b)| (a * b).sqrt()).collect(),
        SinkhornScheme::GeometricMean => cur.iter().copied().collect(),
    };
    let inv: Vec<f64> = scaling.iter().map(|x| 1.0 / x).collect();
    Ok(Balanced {
        kernel: KernelMatrix {
            entries: symmetric_scale(&k.entries, &inv),
            normalization: Normalization::Bistochastic,
            scale_eps: k.scale_eps,
        },
        iterations,
        residual,
        scaling,
    })
}

/// Builds the raw affinity of `cloud` and applies `normalization`.
pub fn build_kernel(
    cloud: &PointCloud,
    eps: f64,
    normalization: Normalization,
    sinkhorn: SinkhornOptions,
) -> Result<KernelMatrix> {
    let raw = affinity(cloud, eps)?;
    match normalization {
        Normalization::Raw => Ok(raw),
        Normalization::Symmetric => normalize_symmetric(&raw),
        Normalization::Bistochastic => normalize_bistochastic(&raw, sinkhorn),
    }
}
