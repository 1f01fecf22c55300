//! `gpembed` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input or settings,
//! 3 numerical failure (degenerate kernel, no convergence, ...).

mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gpembed::io as gio;
use gpembed::kernel::build_kernel;
use gpembed::{
    diffusion_maps, gp_embedding, make_sketch, run_experiment, run_power_sweep, sample, ErrorClass, Method,
    Normalization, ReferenceKind, SinkhornOptions,
};

use config::{RawConfig, SchemaError};

#[derive(Parser)]
#[command(name = "gpembed", version, about = "Diffusion-map and Gaussian-process embeddings of sampled manifolds")]
struct Cli {
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a point cloud from a test manifold.
    Sample(SampleArgs),
    /// Build a (normalized) Gaussian kernel for a point cloud.
    Kernel(KernelArgs),
    /// Embed a point cloud with one method.
    Embed(EmbedArgs),
    /// Run a multi-trial distortion experiment.
    Experiment(Box<ExperimentArgs>),
}

#[derive(Args)]
struct ManifoldArgs {
    /// circle, flat_torus, klein or circle_with_outliers.
    #[arg(long)]
    manifold: Option<String>,
    /// Number of points.
    #[arg(long)]
    n: Option<usize>,
    /// Second radius of the flat torus.
    #[arg(long)]
    r: Option<f64>,
    /// Klein bottle radius a.
    #[arg(long)]
    a: Option<f64>,
    /// Klein bottle radius b.
    #[arg(long)]
    b: Option<f64>,
    /// Outlier points as `x:y,x:y`.
    #[arg(long)]
    outliers: Option<String>,
}

impl ManifoldArgs {
    fn fold_into(&self, raw: &mut RawConfig) {
        raw.set_opt("manifold", self.manifold.as_ref());
        raw.set_opt("n", self.n);
        raw.set_opt("r", self.r);
        raw.set_opt("a", self.a);
        raw.set_opt("b", self.b);
        raw.set_opt("outliers", self.outliers.as_ref());
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    manifold: ManifoldArgs,
    /// RNG seed (falls back to GPEMBED_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KernelArgs {
    /// Point cloud CSV.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    eps: f64,
    /// raw, symmetric or bistochastic.
    #[arg(long, default_value = "symmetric")]
    normalization: Normalization,
    /// Sinkhorn stopping tolerance.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    /// Point cloud CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// DMS, DMB, GPS, GPB, GPSBS or GPSBB.
    #[arg(long)]
    method: Method,
    /// Target dimension.
    #[arg(long)]
    k: usize,
    /// Kernel power; also the diffusion time for DMS/DMB.
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long)]
    eps: f64,
    /// Sketch seed (falls back to GPEMBED_SEED); unused by diffusion maps.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// `key = value` config file; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    manifold: ManifoldArgs,
    #[arg(long)]
    trials: Option<usize>,
    /// Kernel power.
    #[arg(long)]
    p: Option<usize>,
    /// Sweep p over 2, 4, ..., 2^P at a single k.
    #[arg(long = "P")]
    max_exp: Option<u32>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    kmin: Option<usize>,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    /// Comma-separated methods, e.g. `DMS,GPS`.
    #[arg(long)]
    methods: Option<String>,
    /// diffusion or euclidean.
    #[arg(long)]
    reference: Option<ReferenceKind>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    zero_tol: Option<f64>,
    /// Master seed (falls back to GPEMBED_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Report CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-trial values here.
    #[arg(long)]
    raw: Option<PathBuf>,
}

fn emit<F>(out: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> gpembed::Result<()>,
{
    match out {
        Some(path) => {
            gio::to_file(path, |w| f(w)).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn read_cloud(path: &Path) -> Result<gpembed::PointCloud> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    gio::read_cloud(io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn sinkhorn(delta: Option<f64>) -> SinkhornOptions {
    delta.map_or_else(SinkhornOptions::default, SinkhornOptions::with_delta)
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let mut raw = RawConfig::default();
    args.manifold.fold_into(&mut raw);
    raw.set_opt("seed", args.seed);
    let spec = raw.manifold_spec()?;
    let cloud = sample(&spec)?;
    emit(args.out.as_deref(), |w| gio::write_cloud(&cloud, w))
}

fn cmd_kernel(args: KernelArgs) -> Result<()> {
    let cloud = read_cloud(&args.input)?;
    let kernel = build_kernel(&cloud, args.eps, args.normalization, sinkhorn(args.delta))?;
    emit(args.out.as_deref(), |w| gio::write_kernel(&kernel, w))
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let cloud = read_cloud(&args.input)?;
    if args.k == 0 || args.k >= cloud.len() {
        return Err(SchemaError::single("k", format!("need 1 <= k < n = {}, got {}", cloud.len(), args.k)).into());
    }
    if args.p == 0 {
        return Err(SchemaError::single("p", "must be positive").into());
    }
    let kernel = build_kernel(&cloud, args.eps, args.method.normalization(), sinkhorn(args.delta))?;
    let embedding = match args.method.sketch() {
        None => diffusion_maps(&kernel, args.k, args.p as f64)?,
        Some(dist) => {
            let mut raw = RawConfig::default();
            raw.set_opt("seed", args.seed);
            let seed = raw.seed()?;
            let sketch = make_sketch(cloud.len(), args.k, dist, seed)?;
            gp_embedding(&kernel, args.k, args.p, &sketch)?
        }
    };
    emit(args.out.as_deref(), |w| gio::write_embedding(&embedding, w))
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let mut raw = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    args.manifold.fold_into(&mut raw);
    raw.set_opt("trials", args.trials);
    raw.set_opt("p", args.p);
    raw.set_opt("P", args.max_exp);
    raw.set_opt("k", args.k);
    raw.set_opt("kmin", args.kmin);
    raw.set_opt("kmax", args.kmax);
    raw.set_opt("eps", args.eps);
    raw.set_opt("methods", args.methods.as_ref());
    raw.set_opt("reference", args.reference.map(ReferenceKind::as_str));
    raw.set_opt("delta", args.delta);
    raw.set_opt("max_iters", args.max_iters);
    raw.set_opt("zero_tol", args.zero_tol);
    raw.set_opt("seed", args.seed);

    let cfg = raw.experiment()?;
    let report = if cfg.powers.len() > 1 {
        run_power_sweep(&cfg)?
    } else {
        run_experiment(&cfg)?
    };
    emit(args.out.as_deref(), |w| gio::write_report(&report, w))?;
    if let Some(path) = &args.raw {
        emit(Some(path), |w| gio::write_raw(&report, w))?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gpembed::Error>() {
            return match e.class() {
                ErrorClass::Io => 1,
                ErrorClass::Validation => 2,
                ErrorClass::Numerical => 3,
            };
        }
        if cause.is::<SchemaError>() {
            return 2;
        }
        if cause.is::<io::Error>() {
            return 1;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Kernel(a) => cmd_kernel(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Experiment(a) => cmd_experiment(*a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
