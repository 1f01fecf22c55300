//! Multi-trial distortion experiments.
//!
//! Every trial samples one cloud and builds each needed kernel once; all
//! methods, target dimensions and powers of that trial share them. Within a
//! trial one Gaussian sketch per `k` serves both GPS and GPB, and one
//! Bernoulli sketch per `k` serves both GPSBS and GPSBB. Sketches do not
//! depend on the power, so a power sweep follows one sketch across scales.
//!
//! Seeds form a tree: master seed -> trial seed -> {cloud, gaussian,
//! bernoulli} -> per-`k` sketch seed.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::embed::{diffusion_maps_from, make_sketch, sketched_embedding, Embedding, Method, SketchDistribution};
use crate::error::{Error, Result};
use crate::kernel::{affinity, normalize_bistochastic, normalize_symmetric, KernelMatrix, Normalization, SinkhornOptions};
use crate::manifolds::{sample, ManifoldKind, ManifoldSpec};
use crate::metric::{bilipschitz_distortion, diffusion_distance, pairwise_euclidean, DistanceKind, DistanceMatrix, DEFAULT_ZERO_TOL};
use crate::rng::derive_seed;
use crate::spectral::{top_eigenpairs, EigenOptions, SpectralDecomposition};

const STREAM_CLOUD: u64 = 0;
const STREAM_GAUSSIAN: u64 = 1;
const STREAM_BERNOULLI: u64 = 2;

/// Distance the embeddings are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// Diffusion distance of the embedding's own kernel at time `p`.
    Diffusion,
    /// Euclidean distance between the sampled points.
    Euclidean,
}

impl ReferenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceKind::Diffusion => "diffusion",
            ReferenceKind::Euclidean => "euclidean",
        }
    }
}

impl std::str::FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "diffusion" => Ok(ReferenceKind::Diffusion),
            "euclidean" => Ok(ReferenceKind::Euclidean),
            other => Err(Error::InvalidParameter(format!("unknown reference '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub manifold: ManifoldKind,
    pub trials: usize,
    /// Points per trial.
    pub n: usize,
    /// Kernel powers (diffusion time for diffusion maps).
    pub powers: Vec<usize>,
    /// Target dimensions.
    pub dims: Vec<usize>,
    pub eps: f64,
    pub methods: Vec<Method>,
    pub reference: ReferenceKind,
    pub sinkhorn: SinkhornOptions,
    pub master_seed: u64,
    pub zero_tol: f64,
}

impl ExperimentConfig {
    /// A config over `k_min..=k_max` at a single power.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        manifold: ManifoldKind,
        trials: usize,
        n: usize,
        p: usize,
        k_min: usize,
        k_max: usize,
        eps: f64,
        methods: Vec<Method>,
        master_seed: u64,
    ) -> Self {
        Self {
            manifold,
            trials,
            n,
            powers: vec![p],
            dims: (k_min..=k_max).collect(),
            eps,
            methods,
            reference: ReferenceKind::Diffusion,
            sinkhorn: SinkhornOptions::default(),
            master_seed,
            zero_tol: DEFAULT_ZERO_TOL,
        }
    }

    /// A power sweep `p = 2, 4, ..., 2^max_exp` at fixed `k` against the
    /// Euclidean reference.
    #[allow(clippy::too_many_arguments)]
    pub fn power_sweep(
        manifold: ManifoldKind,
        trials: usize,
        n: usize,
        max_exp: u32,
        k: usize,
        eps: f64,
        methods: Vec<Method>,
        master_seed: u64,
    ) -> Self {
        Self {
            powers: sweep_powers(max_exp),
            dims: vec![k],
            reference: ReferenceKind::Euclidean,
            ..Self::new(manifold, trials, n, 1, k, k, eps, methods, master_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.powers.is_empty() || self.powers.contains(&0) {
            return bad("powers must be a nonempty list of positive integers".into());
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return bad("target dimensions must be a nonempty list of positive integers".into());
        }
        let k_max = *self.dims.iter().max().unwrap();
        if k_max + 1 > self.n {
            return bad(format!("k_max = {k_max} must be at most n - 1 = {}", self.n.saturating_sub(1)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.sinkhorn.delta > 0.0) || self.sinkhorn.max_iters == 0 {
            return bad("sinkhorn delta and max_iters must be positive".into());
        }
        ManifoldSpec::new(self.manifold.clone(), self.n, 0).validate()
    }

    fn normalizations(&self) -> Vec<Normalization> {
        let mut out = Vec::new();
        for m in &self.methods {
            let n = m.normalization();
            if !out.contains(&n) {
                out.push(n);
            }
        }
        out
    }
}

/// `[2, 4, ..., 2^max_exp]`.
pub fn sweep_powers(max_exp: u32) -> Vec<usize> {
    (1..=max_exp).map(|e| 1usize << e).collect()
}

/// One `(trial, method, k, p)` measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub method: Method,
    pub k: usize,
    pub p: usize,
    /// Natural log of the distortion, capped on collapse.
    pub log_l: f64,
    pub collapsed: bool,
    /// Content hashes of the cloud and kernel the embedding was built from.
    pub cloud_hash: u64,
    pub kernel_hash: u64,
}

/// Aggregate over trials for one `(method, k, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub k: usize,
    pub p: usize,
    pub mean_log_l: f64,
    /// Population standard deviation over trials.
    pub std_log_l: f64,
    pub collapse_count: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    /// Per-trial measurements in trial order.
    pub outcomes: Vec<TrialOutcome>,
}

impl ExperimentReport {
    pub fn row(&self, method: Method, k: usize, p: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.k == k && r.p == p)
    }
}

/// Runs every configured `(method, k, p)` over all trials.
///
/// Trials run on the current rayon pool; the result does not depend on the
/// number of threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let per_trial: Vec<Vec<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            run_trial(cfg, t).map_err(|e| Error::Trial {
                trial: t,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let outcomes: Vec<TrialOutcome> = per_trial.into_iter().flatten().collect();
    Ok(ExperimentReport {
        rows: aggregate(cfg, &outcomes),
        outcomes,
    })
}

/// Multiscale run: fixed `k`, several powers, Euclidean reference.
pub fn run_power_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.dims.len() != 1 {
        return Err(Error::InvalidParameter(
            "a power sweep needs exactly one target dimension".into(),
        ));
    }
    if cfg.reference != ReferenceKind::Euclidean {
        return Err(Error::InvalidParameter(
            "a power sweep compares against the euclidean reference".into(),
        ));
    }
    run_experiment(cfg)
}

struct TrialKernel {
    kernel: KernelMatrix,
    hash: u64,
    eigen: Option<SpectralDecomposition>,
}

fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<TrialOutcome>> {
    let trial_seed = derive_seed(cfg.master_seed, trial as u64);
    let spec = ManifoldSpec::new(cfg.manifold.clone(), cfg.n, derive_seed(trial_seed, STREAM_CLOUD));
    let cloud = sample(&spec)?;
    let cloud_hash = cloud.content_hash();
    let raw = affinity(&cloud, cfg.eps)?;
    let k_max = *cfg.dims.iter().max().expect("validated");

    let mut kernels: BTreeMap<&'static str, TrialKernel> = BTreeMap::new();
    for norm in cfg.normalizations() {
        let kernel = match norm {
            Normalization::Symmetric => normalize_symmetric(&raw)?,
            Normalization::Bistochastic => normalize_bistochastic(&raw, cfg.sinkhorn)?,
            Normalization::Raw => unreachable!("methods never use the raw kernel"),
        };
        let needs_eigen = cfg
            .methods
            .iter()
            .any(|m| m.is_diffusion_maps() && m.normalization() == norm);
        let eigen = if needs_eigen {
            Some(top_eigenpairs(&kernel, k_max + 1, EigenOptions::dense())?)
        } else {
            None
        };
        let hash = kernel.content_hash();
        kernels.insert(norm.as_str(), TrialKernel { kernel, hash, eigen });
    }

    // Reference distances, shared across k.
    let mut references: BTreeMap<(&'static str, usize), DistanceMatrix> = BTreeMap::new();
    let ambient = match cfg.reference {
        ReferenceKind::Euclidean => {
            Some(pairwise_euclidean(cloud.points()).with_kind(DistanceKind::EuclideanAmbient))
        }
        ReferenceKind::Diffusion => {
            for (name, tk) in &kernels {
                for &p in &cfg.powers {
                    references.insert((name, p), diffusion_distance(&tk.kernel, p)?);
                }
            }
            None
        }
    };
    let reference_for = |norm: Normalization, p: usize| -> &DistanceMatrix {
        match &ambient {
            Some(d) => d,
            None => &references[&(norm.as_str(), p)],
        }
    };

    // Sketches per (distribution, k), shared by both normalizations.
    let mut sketches: BTreeMap<(u64, usize), (u64, DMatrix<f64>)> = BTreeMap::new();
    for m in &cfg.methods {
        if let Some(dist) = m.sketch() {
            let stream = stream_of(dist);
            for &k in &cfg.dims {
                sketches.entry((stream, k)).or_insert_with(|| {
                    let seed = derive_seed(derive_seed(trial_seed, stream), k as u64);
                    let s = make_sketch(cfg.n, k, dist, seed).expect("validated shape");
                    (seed, s.entries().clone())
                });
            }
        }
    }

    let mut order: Vec<usize> = cfg.powers.clone();
    order.sort_unstable();
    order.dedup();

    let mut out = Vec::with_capacity(cfg.methods.len() * cfg.dims.len() * cfg.powers.len());
    for &method in &cfg.methods {
        let norm = method.normalization();
        let tk = &kernels[norm.as_str()];
        for &k in &cfg.dims {
            let mut by_power: BTreeMap<usize, Embedding> = BTreeMap::new();
            match method.sketch() {
                None => {
                    let eigen = tk.eigen.as_ref().expect("eigenpairs computed for diffusion maps");
                    for &p in &order {
                        by_power.insert(p, diffusion_maps_from(eigen, norm, k, p as f64)?);
                    }
                }
                Some(dist) => {
                    let (seed, g) = &sketches[&(stream_of(dist), k)];
                    // A^p G for increasing p, one product per unit of power.
                    let mut product = g.clone();
                    let mut reached = 0;
                    for &p in &order {
                        for _ in reached..p {
                            product = tk.kernel.entries() * product;
                        }
                        reached = p;
                        by_power.insert(p, sketched_embedding(product.clone(), method, p, *seed));
                    }
                }
            }
            for &p in &cfg.powers {
                let emb = &by_power[&p];
                let embedded = pairwise_euclidean(&emb.coords);
                let d = bilipschitz_distortion(&embedded, reference_for(norm, p), cfg.zero_tol)?;
                out.push(TrialOutcome {
                    trial,
                    method,
                    k,
                    p,
                    log_l: d.log_capped(),
                    collapsed: d.collapsed,
                    cloud_hash,
                    kernel_hash: tk.hash,
                });
            }
        }
    }
    Ok(out)
}

fn stream_of(dist: SketchDistribution) -> u64 {
    match dist {
        SketchDistribution::Gaussian => STREAM_GAUSSIAN,
        SketchDistribution::SymmetricBernoulli => STREAM_BERNOULLI,
    }
}

/// Welford accumulation in trial order.
fn aggregate(cfg: &ExperimentConfig, outcomes: &[TrialOutcome]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        for &k in &cfg.dims {
            for &p in &cfg.powers {
                let (mut count, mut mean, mut m2, mut collapses) = (0usize, 0.0, 0.0, 0usize);
                for o in outcomes.iter().filter(|o| o.method == method && o.k == k && o.p == p) {
                    count += 1;
                    let delta = o.log_l - mean;
                    mean += delta / count as f64;
                    m2 += delta * (o.log_l - mean);
                    collapses += o.collapsed as usize;
                }
                rows.push(ReportRow {
                    method,
                    k,
                    p,
                    mean_log_l: mean,
                    std_log_l: if count > 0 { (m2 / count as f64).max(0.0).sqrt() } else { 0.0 },
                    collapse_count: collapses,
                    trials: count,
                });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig::new(ManifoldKind::Circle, 3, 40, 2, 2, 3, 0.25, methods, 11)
    }

    #[test]
    fn sweep_powers_are_doubling() {
        assert_eq!(sweep_powers(4), vec![2, 4, 8, 16]);
        assert!(sweep_powers(0).is_empty());
    }

    #[test]
    fn single_trial_has_zero_std() {
        let mut cfg = small(vec![Method::Dms]);
        cfg.trials = 1;
        cfg.dims = vec![2];
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].std_log_l, 0.0);
        assert_eq!(r.rows[0].trials, 1);
    }

    #[test]
    fn rows_cover_grid_in_order() {
        let cfg = small(vec![Method::Gps, Method::Dms]);
        let r = run_experiment(&cfg).unwrap();
        let keys: Vec<(Method, usize)> = r.rows.iter().map(|r| (r.method, r.k)).collect();
        assert_eq!(
            keys,
            vec![(Method::Gps, 2), (Method::Gps, 3), (Method::Dms, 2), (Method::Dms, 3)]
        );
        assert!(r.rows.iter().all(|r| r.trials == 3 && r.collapse_count <= 3));
        assert_eq!(r.outcomes.len(), 3 * 4);
    }

    #[test]
    fn validation_errors() {
        let mut cfg = small(vec![]);
        assert!(run_experiment(&cfg).is_err());
        cfg.methods = vec![Method::Dms];
        cfg.dims = vec![40];
        assert!(run_experiment(&cfg).is_err());
        cfg.dims = vec![2];
        cfg.eps = 0.0;
        assert!(run_experiment(&cfg).is_err());
        cfg.eps = 0.25;
        cfg.powers = vec![0];
        assert!(run_experiment(&cfg).is_err());
        cfg.powers = vec![2];
        cfg.manifold = ManifoldKind::FlatTorus { r: 0.5 };
        assert!(matches!(run_experiment(&cfg), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn power_sweep_preconditions() {
        let mut cfg = ExperimentConfig::power_sweep(ManifoldKind::Circle, 2, 30, 3, 2, 0.25, vec![Method::Gps], 1);
        assert!(run_power_sweep(&cfg).is_ok());
        cfg.reference = ReferenceKind::Diffusion;
        assert!(run_power_sweep(&cfg).is_err());
        cfg.reference = ReferenceKind::Euclidean;
        cfg.dims = vec![2, 3];
        assert!(run_power_sweep(&cfg).is_err());
    }

    #[test]
    fn trial_errors_carry_index() {
        let mut cfg = small(vec![Method::Dmb]);
        cfg.sinkhorn = SinkhornOptions {
            delta: 1e-300,
            max_iters: 1,
            ..SinkhornOptions::default()
        };
        match run_experiment(&cfg) {
            Err(Error::Trial { trial, source }) => {
                assert_eq!(trial, 0);
                assert!(matches!(*source, Error::ConvergenceFailure { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn adding_a_method_does_not_perturb_others() {
        let a = run_experiment(&small(vec![Method::Gps])).unwrap();
        let b = run_experiment(&small(vec![Method::Dms, Method::Gpsbs, Method::Gps])).unwrap();
        for k in [2, 3] {
            assert_eq!(a.row(Method::Gps, k, 2), b.row(Method::Gps, k, 2));
        }
    }
}
