//! Diffusion-maps and Gaussian-process (sketched) embeddings.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{KernelMatrix, Normalization};
use crate::rng::rng_from;
use crate::spectral::{power_apply, top_eigenpairs, EigenOptions, SpectralDecomposition};

/// Eigenvalues in `[-CLAMP_TOL, 0)` are treated as zero before powering.
pub const CLAMP_TOL: f64 = 1e-10;

/// Embedding method: algorithm crossed with kernel normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Diffusion maps, symmetric kernel.
    Dms,
    /// Diffusion maps, bistochastic kernel.
    Dmb,
    /// Gaussian sketch, symmetric kernel.
    Gps,
    /// Gaussian sketch, bistochastic kernel.
    Gpb,
    /// Bernoulli sketch, symmetric kernel.
    Gpsbs,
    /// Bernoulli sketch, bistochastic kernel.
    Gpsbb,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Dms,
        Method::Dmb,
        Method::Gps,
        Method::Gpb,
        Method::Gpsbs,
        Method::Gpsbb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dms => "DMS",
            Method::Dmb => "DMB",
            Method::Gps => "GPS",
            Method::Gpb => "GPB",
            Method::Gpsbs => "GPSBS",
            Method::Gpsbb => "GPSBB",
        }
    }

    pub fn normalization(self) -> Normalization {
        match self {
            Method::Dms | Method::Gps | Method::Gpsbs => Normalization::Symmetric,
            Method::Dmb | Method::Gpb | Method::Gpsbb => Normalization::Bistochastic,
        }
    }

    /// Sketch distribution, or `None` for diffusion maps.
    pub fn sketch(self) -> Option<SketchDistribution> {
        match self {
            Method::Dms | Method::Dmb => None,
            Method::Gps | Method::Gpb => Some(SketchDistribution::Gaussian),
            Method::Gpsbs | Method::Gpsbb => Some(SketchDistribution::SymmetricBernoulli),
        }
    }

    pub fn is_diffusion_maps(self) -> bool {
        self.sketch().is_none()
    }

    fn diffusion(normalization: Normalization) -> Result<Self> {
        match normalization {
            Normalization::Symmetric => Ok(Method::Dms),
            Normalization::Bistochastic => Ok(Method::Dmb),
            Normalization::Raw => Err(not_normalized()),
        }
    }

    fn sketched(normalization: Normalization, dist: SketchDistribution) -> Result<Self> {
        use SketchDistribution::*;
        match (normalization, dist) {
            (Normalization::Symmetric, Gaussian) => Ok(Method::Gps),
            (Normalization::Bistochastic, Gaussian) => Ok(Method::Gpb),
            (Normalization::Symmetric, SymmetricBernoulli) => Ok(Method::Gpsbs),
            (Normalization::Bistochastic, SymmetricBernoulli) => Ok(Method::Gpsbb),
            (Normalization::Raw, _) => Err(not_normalized()),
        }
    }
}

fn not_normalized() -> Error {
    Error::InvalidParameter("embeddings require a symmetric or bistochastic kernel".into())
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == up)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{}'", s.trim())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SketchDistribution {
    Gaussian,
    SymmetricBernoulli,
}

/// Random `N x k` test matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    entries: DMatrix<f64>,
    distribution: SketchDistribution,
    seed: u64,
}

impl SketchMatrix {
    /// Wraps a fixed matrix, mainly for tests and replay.
    pub fn from_entries(entries: DMatrix<f64>, distribution: SketchDistribution, seed: u64) -> Self {
        Self {
            entries,
            distribution,
            seed,
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn distribution(&self) -> SketchDistribution {
        self.distribution
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Draws an `n x k` sketch. Entries are generated in row-major order from a
/// generator seeded with `seed`.
pub fn make_sketch(n: usize, k: usize, distribution: SketchDistribution, seed: u64) -> Result<SketchMatrix> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidParameter(format!(
            "sketch shape must be positive, got {n}x{k}"
        )));
    }
    let mut rng = rng_from(seed);
    let mut data = Vec::with_capacity(n * k);
    for _ in 0..n * k {
        let v = match distribution {
            SketchDistribution::Gaussian => StandardNormal.sample(&mut rng),
            SketchDistribution::SymmetricBernoulli => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        data.push(v);
    }
    Ok(SketchMatrix {
        entries: DMatrix::from_row_slice(n, k, &data),
        distribution,
        seed,
    })
}

/// Low-dimensional coordinates of a point set, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: DMatrix<f64>,
    pub method: Method,
    /// Diffusion time `t` or sketch power `p`.
    pub power: f64,
    /// Sketch seed; `None` for diffusion maps.
    pub seed: Option<u64>,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// Diffusion-maps embedding: `y_j = (lambda_1^t v_1[j], ..., lambda_k^t v_k[j])`.
///
/// The top eigenpair is computed and discarded.
pub fn diffusion_maps(a: &KernelMatrix, k: usize, t: f64) -> Result<Embedding> {
    let method = Method::diffusion(a.normalization())?;
    check_dm_params(a.size(), k, t)?;
    let dec = top_eigenpairs(a, k + 1, EigenOptions::dense())?;
    diffusion_coords(&dec, method, k, t)
}

/// Diffusion-maps embedding from precomputed eigenpairs (at least `k + 1`).
pub fn diffusion_maps_from(
    dec: &SpectralDecomposition,
    normalization: Normalization,
    k: usize,
    t: f64,
) -> Result<Embedding> {
    let method = Method::diffusion(normalization)?;
    check_dm_params(dec.source_size(), k, t)?;
    diffusion_coords(dec, method, k, t)
}

fn check_dm_params(n: usize, k: usize, t: f64) -> Result<()> {
    if k == 0 || k + 1 > n {
        return Err(Error::InvalidParameter(format!(
            "diffusion maps needs 1 <= k < N, got k={k}, N={n}"
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("time must be positive, got {t}")));
    }
    Ok(())
}

fn diffusion_coords(dec: &SpectralDecomposition, method: Method, k: usize, t: f64) -> Result<Embedding> {
    if dec.len() < k + 1 {
        return Err(Error::InvalidParameter(format!(
            "need {} eigenpairs, have {}",
            k + 1,
            dec.len()
        )));
    }
    let mut weights = Vec::with_capacity(k);
    for (i, &l) in dec.eigenvalues()[1..=k].iter().enumerate() {
        let l = if l < 0.0 {
            if l < -CLAMP_TOL {
                return Err(Error::Spectral(format!(
                    "eigenvalue {} is negative ({l:e})",
                    i + 1
                )));
            }
            0.0
        } else {
            l
        };
        weights.push(l.powf(t));
    }
    let vecs = dec.eigenvectors();
    let coords = DMatrix::from_fn(vecs.nrows(), k, |j, i| weights[i] * vecs[(j, i + 1)]);
    Ok(Embedding {
        coords,
        method,
        power: t,
        seed: None,
    })
}

/// Gaussian-process embedding `Y = A^p G / sqrt(k)`, with `k` the sketch width.
pub fn gp_embedding(a: &KernelMatrix, k: usize, p: usize, sketch: &SketchMatrix) -> Result<Embedding> {
    let method = Method::sketched(a.normalization(), sketch.distribution())?;
    let g = sketch.entries();
    if g.nrows() != a.size() || g.ncols() != k || k == 0 {
        return Err(Error::InvalidParameter(format!(
            "sketch is {}x{}, expected {}x{k}",
            g.nrows(),
            g.ncols(),
            a.size()
        )));
    }
    let product = power_apply(a.entries(), p, g)?;
    Ok(sketched_embedding(product, method, p, sketch.seed()))
}

/// Wraps an already computed `A^p G` as an embedding.
pub(crate) fn sketched_embedding(product: DMatrix<f64>, method: Method, p: usize, seed: u64) -> Embedding {
    let k = product.ncols();
    Embedding {
        coords: product / (k as f64).sqrt(),
        method,
        power: p as f64,
        seed: Some(seed),
    }
}
