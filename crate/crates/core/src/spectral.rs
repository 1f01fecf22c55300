//! Top eigenpairs of symmetric PSD kernels and repeated kernel application.
//!
//! Two solvers are provided: a dense symmetric eigendecomposition, and a
//! randomized range finder with subspace (power) iteration followed by a
//! Rayleigh-Ritz step. The randomized result is checked against the residual
//! bound and replaced by the dense result when it falls short.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;

/// Components below this magnitude are skipped when fixing eigenvector signs.
const SIGN_EPS: f64 = 1e-12;
/// Relative gap under which two eigenvalues are treated as one eigenspace.
const TIE_TOL: f64 = 1e-12;
/// Relative PSD slack on the smallest retained eigenvalue.
pub const PSD_TOL: f64 = 1e-10;
/// Relative bound on `|A v - lambda v|`.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Bound on `|<v_i, v_j> - delta_ij|`.
pub const ORTHO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    Dense,
    Randomized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub method: EigenMethod,
    /// Extra sketch columns beyond `m` (randomized only).
    pub oversample: usize,
    /// Subspace-iteration steps after the initial product (randomized only).
    pub power_steps: usize,
    /// Seed of the Gaussian test matrix (randomized only).
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            method: EigenMethod::Dense,
            oversample: 8,
            power_steps: 4,
            seed: 0x5eed,
        }
    }
}

impl EigenOptions {
    pub fn dense() -> Self {
        Self::default()
    }

    pub fn randomized(oversample: usize, power_steps: usize) -> Self {
        Self {
            method: EigenMethod::Randomized,
            oversample,
            power_steps,
            ..Self::default()
        }
    }
}

/// Leading eigenpairs in descending eigenvalue order.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    /// `N x m`, column `i` pairs with `eigenvalues[i]`.
    eigenvectors: DMatrix<f64>,
    method_used: EigenMethod,
    fell_back: bool,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i).iter().copied().collect()
    }

    pub fn source_size(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Solver that produced the returned pairs.
    pub fn method_used(&self) -> EigenMethod {
        self.method_used
    }

    /// True when the randomized solver missed the residual bound and the
    /// dense solver was used instead.
    pub fn fell_back(&self) -> bool {
        self.fell_back
    }

    /// Largest `|A v_i - lambda_i v_i|_2` over retained pairs.
    pub fn max_residual(&self, a: &DMatrix<f64>) -> f64 {
        max_residual(a, &self.eigenvalues, &self.eigenvectors)
    }
}

/// Top `m` eigenpairs of a symmetric PSD kernel.
pub fn top_eigenpairs(a: &KernelMatrix, m: usize, opts: EigenOptions) -> Result<SpectralDecomposition> {
    top_eigenpairs_matrix(a.entries(), m, opts)
}

/// Matrix-level variant of [`top_eigenpairs`] for callers holding a plain
/// symmetric matrix.
pub fn top_eigenpairs_matrix(
    a: &DMatrix<f64>,
    m: usize,
    opts: EigenOptions,
) -> Result<SpectralDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidParameter("matrix must be square".into()));
    }
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "requested {m} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let scale = |vals: &[f64]| vals.first().copied().unwrap_or(0.0).max(1.0);

    if opts.method == EigenMethod::Randomized && m < n {
        let (vals, vecs) = randomized(a, m, opts);
        let tol = RESIDUAL_TOL * scale(&vals);
        if max_residual(a, &vals, &vecs) <= tol && check_psd(&vals).is_ok() {
            return Ok(SpectralDecomposition {
                eigenvalues: vals,
                eigenvectors: vecs,
                method_used: EigenMethod::Randomized,
                fell_back: false,
            });
        }
        let mut dec = dense(a, m)?;
        dec.fell_back = true;
        return Ok(dec);
    }
    dense(a, m)
}

fn dense(a: &DMatrix<f64>, m: usize) -> Result<SpectralDecomposition> {
    let eig = a.clone().symmetric_eigen();
    let pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&l, v)| (l, v.iter().copied().collect()))
        .collect();
    let (vals, vecs) = canonicalize(pairs, m, a.nrows());
    check_psd(&vals)?;
    let tol = RESIDUAL_TOL * vals[0].max(1.0);
    let res = max_residual(a, &vals, &vecs);
    if !(res <= tol) {
        return Err(Error::Spectral(format!(
            "eigen residual {res:e} exceeds {tol:e}"
        )));
    }
    Ok(SpectralDecomposition {
        eigenvalues: vals,
        eigenvectors: vecs,
        method_used: EigenMethod::Dense,
        fell_back: false,
    })
}

fn randomized(a: &DMatrix<f64>, m: usize, opts: EigenOptions) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let width = (m + opts.oversample).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = DMatrix::from_fn(n, width, |_, _| StandardNormal.sample(&mut rng));
    let mut q = (a * omega).qr().q();
    for _ in 0..opts.power_steps {
        q = (a * &q).qr().q();
    }
    let aq = a * &q;
    let t = q.transpose() * &aq;
    let t = (&t + t.transpose()) * 0.5;
    let eig = t.symmetric_eigen();
    let pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&l, u)| (l, (&q * u).iter().copied().collect()))
        .collect();
    canonicalize(pairs, m, n)
}

fn check_psd(vals: &[f64]) -> Result<()> {
    let top = vals[0];
    let slack = if top > 0.0 { PSD_TOL * top } else { PSD_TOL };
    match vals.iter().find(|&&l| l < -slack) {
        Some(l) => Err(Error::Spectral(format!(
            "matrix is not positive semidefinite (eigenvalue {l:e}, top {top:e})"
        ))),
        None => Ok(()),
    }
}

/// Sorts pairs by descending eigenvalue, fixes signs, orders tied
/// eigenvalues by lexicographically descending eigenvector, and keeps `m`.
fn canonicalize(mut pairs: Vec<(f64, Vec<f64>)>, m: usize, n: usize) -> (Vec<f64>, DMatrix<f64>) {
    for (_, v) in pairs.iter_mut() {
        if let Some(&first) = v.iter().find(|x| x.abs() > SIGN_EPS) {
            if first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let scale = pairs.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(1.0);
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && (pairs[end - 1].0 - pairs[end].0).abs() <= TIE_TOL * scale {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by(|a, b| {
                b.1.iter()
                    .zip(a.1.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        }
        start = end;
    }
    pairs.truncate(m);
    let vals = pairs.iter().map(|p| p.0).collect();
    let vecs = DMatrix::from_fn(n, pairs.len(), |i, j| pairs[j].1[i]);
    (vals, vecs)
}

fn max_residual(a: &DMatrix<f64>, vals: &[f64], vecs: &DMatrix<f64>) -> f64 {
    let av = a * vecs;
    vals.iter()
        .enumerate()
        .map(|(i, &l)| (av.column(i) - vecs.column(i) * l).norm())
        .fold(0.0, f64::max)
}

/// `A^p G` by `p` successive products; `A^p` is never formed.
pub fn matrix_power_apply(a: &KernelMatrix, p: usize, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    power_apply(a.entries(), p, g)
}

pub(crate) fn power_apply(a: &DMatrix<f64>, p: usize, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::InvalidParameter("power must be at least 1".into()));
    }
    if g.nrows() != a.nrows() {
        return Err(Error::InvalidParameter(format!(
            "sketch has {} rows, kernel has {}",
            g.nrows(),
            a.nrows()
        )));
    }
    let mut out = a * g;
    for _ in 1..p {
        out = a * out;
    }
    Ok(out)
}

/// Explicit dense `A^p` by repeated squaring.
pub fn matrix_power(a: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut result: Option<DMatrix<f64>> = None;
    let mut base = a.clone();
    let mut e = p;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => &r * &base,
            });
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result.unwrap_or_else(|| DMatrix::identity(n, n))
}
