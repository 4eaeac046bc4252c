//! Command-line interface for implicit surface reconstruction and the
//! accompanying numerical analyses.

use clap::{Args, Parser, Subcommand, ValueEnum};
use recon_core::analysis;
use recon_core::io::{load_cloud, load_mesh, save_mesh};
use recon_core::kernel::{KernelSpec, SpectralParams};
use recon_core::mesher;
use recon_core::metrics::{self, DEFAULT_F_SCORE_THRESHOLD};
use recon_core::ReconError;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "recon",
    version,
    about = "Implicit surface reconstruction from oriented point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a mesh from an oriented point cloud.
    Reconstruct(ReconstructArgs),
    /// Compare a reconstructed mesh against a ground-truth mesh.
    Benchmark(BenchmarkArgs),
    /// Reconstruct and benchmark across a list of bandwidths.
    Sweep(SweepArgs),
    /// Numerical analyses: spectra, eigenvalue decay, random features,
    /// norm bounds.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelKey {
    Matern12,
    Matern32,
    Matern52,
    Gaussian,
    Arccos,
}

impl KernelKey {
    fn as_str(self) -> &'static str {
        match self {
            Self::Matern12 => "matern12",
            Self::Matern32 => "matern32",
            Self::Matern52 => "matern52",
            Self::Gaussian => "gaussian",
            Self::Arccos => "arccos",
        }
    }
}

#[derive(Args, Debug)]
struct KernelOpts {
    /// Kernel family.
    #[arg(long, value_enum, default_value = "matern32")]
    kernel: KernelKey,
    /// Bandwidth (ignored by arccos).
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    /// Compact-support taper range h'; enables the sparse solver.
    #[arg(long)]
    taper_h: Option<f64>,
}

impl KernelOpts {
    fn spec(&self) -> Result<KernelSpec, ReconError> {
        self.spec_with_h(self.h)
    }

    fn spec_with_h(&self, h: f64) -> Result<KernelSpec, ReconError> {
        let base = match self.kernel {
            KernelKey::Matern12 => KernelSpec::matern(0.5, h)?,
            KernelKey::Matern32 => KernelSpec::matern(1.5, h)?,
            KernelKey::Matern52 => KernelSpec::matern(2.5, h)?,
            KernelKey::Gaussian => KernelSpec::gaussian(h)?,
            KernelKey::Arccos => KernelSpec::arc_cosine(),
        };
        match self.taper_h {
            Some(hp) => base.with_taper(2.0, hp),
            None => Ok(base),
        }
    }
}

#[derive(Args, Debug)]
struct CommonOpts {
    /// Worker threads (default: hardware parallelism; RECON_THREADS is the
    /// environment fallback).
    #[arg(long)]
    threads: Option<usize>,
    /// RNG seed for all stochastic stages.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Input cloud (.ply, .obj or .xyz; needs normals).
    #[arg(long)]
    input: PathBuf,
    /// Output mesh (.obj or .ply).
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    kernel: KernelOpts,
    /// Ridge regularization.
    #[arg(long, default_value_t = 1e-10)]
    lambda: f64,
    /// Normal offset for the on/off-surface constraints.
    #[arg(long, default_value_t = 0.005)]
    epsilon: f64,
    /// Marching-cubes lattice resolution per axis.
    #[arg(long, default_value_t = 128)]
    resolution: usize,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Reconstructed mesh.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth mesh.
    #[arg(long)]
    gt: PathBuf,
    /// Surface samples per mesh.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// F-score threshold.
    #[arg(long, default_value_t = DEFAULT_F_SCORE_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Input cloud.
    #[arg(long)]
    input: PathBuf,
    /// Ground-truth mesh for the metrics.
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated bandwidths.
    #[arg(long, value_delimiter = ',', required = true)]
    h_list: Vec<f64>,
    /// Comma-separated ridge parameters (one row per (h, lambda) pair).
    #[arg(long, value_delimiter = ',', default_value = "1e-10")]
    lambda_list: Vec<f64>,
    #[command(flatten)]
    kernel: KernelOpts,
    #[arg(long, default_value_t = 0.005)]
    epsilon: f64,
    #[arg(long, default_value_t = 128)]
    resolution: usize,
    /// Surface samples per mesh for the metrics.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Optional CSV output path (rows are also printed to stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(subcommand)]
    what: AnalyzeCommand,
}

#[derive(Subcommand, Debug)]
enum AnalyzeCommand {
    /// Tabulate the spectral density along a radial frequency axis.
    Spectrum {
        #[command(flatten)]
        kernel: KernelOpts,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 5.0)]
        omega_max: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Empirical eigenvalue decay rate of the kernel Gram matrix.
    Edr {
        #[command(flatten)]
        kernel: KernelOpts,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Random-feature kernel estimates against the closed form.
    Rff {
        #[command(flatten)]
        kernel: KernelOpts,
        #[arg(long, default_value_t = 100_000)]
        num_features: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// RKHS-norm bound constants and optimal bandwidth for a Gaussian bump.
    Bound {
        #[arg(long, default_value_t = 0.5)]
        nu: f64,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        /// Comma-separated bandwidths for the bound/norm curves.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.01,0.1,0.5,1,5,100"
        )]
        h_list: Vec<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn exit_code_for(err: &ReconError) -> u8 {
    match err {
        ReconError::Io(_) | ReconError::Parse { .. } | ReconError::InvalidInput(_) => 2,
        _ => 1,
    }
}

fn init_threads(requested: Option<usize>) -> usize {
    let threads = requested
        .or_else(|| {
            std::env::var("RECON_THREADS").ok().and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
        .max(1);
    // Ignore the error if a pool already exists (tests call main() twice).
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    threads
}

fn open_input(path: &Path) -> Result<(), ReconError> {
    if !path.exists() {
        return Err(ReconError::InvalidInput(format!(
            "input not found: {}",
            path.display()
        )));
    }
    Ok(())
}

/// Writes rows to stdout and, optionally, to a CSV file.
struct CsvSink {
    file: Option<std::fs::File>,
}

impl CsvSink {
    fn create(path: &Option<PathBuf>) -> Result<Self, ReconError> {
        let file = match path {
            Some(p) => Some(std::fs::File::create(p)?),
            None => None,
        };
        Ok(Self { file })
    }

    fn row(&mut self, line: &str) -> Result<(), ReconError> {
        println!("{line}");
        if let Some(f) = self.file.as_mut() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

fn cmd_reconstruct(args: &ReconstructArgs) -> Result<(), ReconError> {
    let threads = init_threads(args.common.threads);
    println!(
        "config: kernel={} h={} lambda={} epsilon={} resolution={} taper_h={} threads={} seed={}",
        args.kernel.kernel.as_str(),
        args.kernel.h,
        args.lambda,
        args.epsilon,
        args.resolution,
        args.kernel
            .taper_h
            .map(|v| v.to_string())
            .unwrap_or_else(|| "none".into()),
        threads,
        args.common.seed
    );
    open_input(&args.input)?;
    let spec = args.kernel.spec()?;
    let cloud = load_cloud(&args.input, None)?;
    println!("loaded {} oriented points from {}", cloud.len(), args.input.display());
    let (mesh, stats) =
        mesher::reconstruct(&cloud, &spec, args.epsilon, args.lambda, args.resolution)?;
    let format = recon_core::io::detect_mesh_format(&args.output).ok_or_else(|| {
        ReconError::InvalidInput(format!(
            "cannot infer mesh format of {} (use .obj or .ply)",
            args.output.display()
        ))
    })?;
    save_mesh(&mesh, &args.output, format)?;
    println!(
        "solver: {} path, relative residual {:.3e}{}",
        if stats.used_sparse_solver { "sparse" } else { "dense" },
        stats.relative_residual,
        stats
            .cg_iterations
            .map(|i| format!(", {i} CG iterations"))
            .unwrap_or_default()
    );
    if let Some(dist) = stats.coincident_warning {
        println!(
            "warning: augmented centers nearly coincide (min distance {dist:.3e}); \
             epsilon may exceed the local feature size"
        );
    }
    println!(
        "timings: assembly {:.3}s, solve {:.3}s, extraction {:.3}s",
        stats.assembly_secs, stats.solve_secs, stats.extraction_secs
    );
    println!(
        "wrote {} vertices, {} faces to {}",
        mesh.vertices.len(),
        mesh.faces.len(),
        args.output.display()
    );
    Ok(())
}

const METRICS_HEADER: &str = "chamfer_x1000,hausdorff,f_score,normal_consistency,sample_count";

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<(), ReconError> {
    init_threads(args.common.threads);
    open_input(&args.pred)?;
    open_input(&args.gt)?;
    let pred = load_mesh(&args.pred)?;
    let gt = load_mesh(&args.gt)?;
    let pred_s = metrics::sample_mesh(&pred, args.samples, args.common.seed)?;
    let gt_s = metrics::sample_mesh(&gt, args.samples, args.common.seed.wrapping_add(1))?;
    let report = metrics::evaluate(&pred_s, &gt_s, args.threshold);
    println!("{METRICS_HEADER}");
    println!(
        "{},{},{},{},{}",
        report.chamfer_x1000,
        report.hausdorff,
        report.f_score,
        report.normal_consistency,
        report.sample_count
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), ReconError> {
    init_threads(args.common.threads);
    open_input(&args.input)?;
    open_input(&args.gt)?;
    let cloud = load_cloud(&args.input, None)?;
    let gt = load_mesh(&args.gt)?;
    let gt_s = metrics::sample_mesh(&gt, args.samples, args.common.seed.wrapping_add(1))?;
    let mut sink = CsvSink::create(&args.output)?;
    sink.row(&format!("h,lambda,{METRICS_HEADER}"))?;
    for &h in &args.h_list {
        for &lambda in &args.lambda_list {
            let spec = args.kernel.spec_with_h(h)?;
            let (mesh, _) =
                mesher::reconstruct(&cloud, &spec, args.epsilon, lambda, args.resolution)?;
            let pred_s = metrics::sample_mesh(&mesh, args.samples, args.common.seed)?;
            let r = metrics::evaluate(&pred_s, &gt_s, DEFAULT_F_SCORE_THRESHOLD);
            sink.row(&format!(
                "{h},{lambda},{},{},{},{},{}",
                r.chamfer_x1000, r.hausdorff, r.f_score, r.normal_consistency, r.sample_count
            ))?;
        }
    }
    Ok(())
}

fn nu_of(key: KernelKey) -> Result<f64, ReconError> {
    match key {
        KernelKey::Matern12 => Ok(0.5),
        KernelKey::Matern32 => Ok(1.5),
        KernelKey::Matern52 => Ok(2.5),
        other => Err(ReconError::InvalidInput(format!(
            "{} has no Matern spectral density",
            other.as_str()
        ))),
    }
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), ReconError> {
    match &args.what {
        AnalyzeCommand::Spectrum { kernel, d, omega_max, steps, output } => {
            let mut sink = CsvSink::create(output)?;
            sink.row("omega_norm,density")?;
            match kernel.kernel {
                KernelKey::Gaussian => {
                    for i in 0..*steps {
                        let w = omega_max * i as f64 / (*steps - 1).max(1) as f64;
                        let p = recon_core::kernel::gaussian_spectral_density(*d, kernel.h, w);
                        sink.row(&format!("{w},{p}"))?;
                    }
                }
                _ => {
                    let params = SpectralParams::new(*d, nu_of(kernel.kernel)?, kernel.h)?;
                    for (w, p) in analysis::spectrum_table(&params, *omega_max, *steps)? {
                        sink.row(&format!("{w},{p}"))?;
                    }
                }
            }
            Ok(())
        }
        AnalyzeCommand::Edr { kernel, d, n, seed, output } => {
            let spec = kernel.spec()?;
            let fit = analysis::empirical_edr(&spec, *n, *d, *seed, None)?;
            let mut sink = CsvSink::create(output)?;
            sink.row("slope,intercept,r_squared,fit_lo,fit_hi")?;
            sink.row(&format!(
                "{},{},{},{},{}",
                fit.slope,
                fit.intercept,
                fit.r_squared,
                fit.eigenvalues_used.0,
                fit.eigenvalues_used.1
            ))?;
            println!("fitted slope: {:.4}", fit.slope);
            Ok(())
        }
        AnalyzeCommand::Rff { kernel, num_features, seed, output } => {
            let spec = kernel.spec()?;
            let mut sink = CsvSink::create(output)?;
            sink.row("tau,estimate,closed_form,abs_error")?;
            for i in 0..=20 {
                let tau = 0.15 * i as f64;
                let x = [0.0, 0.0, 0.0];
                let y = [tau, 0.0, 0.0];
                let est = analysis::rff_kernel_estimate(
                    &spec,
                    &x,
                    &y,
                    *num_features,
                    seed.wrapping_add(i),
                )?;
                let exact = recon_core::kernel::eval_radial(&spec, tau)?;
                sink.row(&format!("{tau},{est},{exact},{}", (est - exact).abs()))?;
            }
            Ok(())
        }
        AnalyzeCommand::Bound { nu, grid, h_list, output } => {
            // bundled test function: Gaussian bump on [0,1]
            let samples: Vec<f64> = (0..*grid)
                .map(|i| {
                    let x = i as f64 / *grid as f64;
                    (-50.0 * (x - 0.5).powi(2)).exp()
                })
                .collect();
            let report = analysis::norm_bound_report(&samples, &[*grid], *nu, h_list)?;
            println!(
                "c1={:.6e} c2={:.6e} h_star_closed={:.8} h_star_numeric={:.8}",
                report.c1, report.c2, report.h_star_closed, report.h_star_numeric
            );
            let mut sink = CsvSink::create(output)?;
            sink.row("h,bound,spectral_norm")?;
            for ((h, b), (_, n)) in report.bound_values.iter().zip(&report.norm_values) {
                sink.row(&format!("{h},{b},{n}"))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
