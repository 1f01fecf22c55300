//! Heat-kernel approximations on finite point sets, with diffusion-maps and
//! Gaussian-process embeddings and tools to measure their distortion.
//!
//! The pipeline is:
//!
//! 1. sample a cloud ([`manifolds::sample`]) or load one ([`io::read_cloud`]),
//! 2. build a normalized heat kernel ([`kernel::affinity`] followed by
//!    [`kernel::normalize_symmetric`] or [`kernel::normalize_bistochastic`]),
//! 3. embed it with [`embed::diffusion_maps`] or [`embed::gp_embedding`],
//! 4. score the embedding with [`metric::bilipschitz_distortion`].
//!
//! [`harness`] repeats this over trials, methods, target dimensions and powers.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod embed;
pub mod error;
pub mod harness;
pub mod io;
pub mod kernel;
pub mod manifolds;
pub mod metric;
pub mod rng;
pub mod spectral;

pub use embed::{diffusion_maps, gp_embedding, make_sketch, Embedding, Method, SketchDistribution, SketchMatrix};
pub use error::{Error, ErrorClass, Result};
pub use harness::{run_experiment, run_power_sweep, ExperimentConfig, ExperimentReport, ReferenceKind, ReportRow};
pub use kernel::{affinity, normalize_bistochastic, normalize_symmetric, KernelMatrix, Normalization, PointCloud, SinkhornOptions, SinkhornScheme};
pub use manifolds::{sample, ManifoldKind, ManifoldSpec};
pub use metric::{bilipschitz_distortion, diffusion_distance, pairwise_euclidean, DistanceKind, DistanceMatrix, Distortion};
pub use spectral::{matrix_power_apply, top_eigenpairs, EigenMethod, EigenOptions, SpectralDecomposition};
