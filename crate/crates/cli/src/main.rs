//! `pim`: command-line driver for point integral method solves, eigenproblems,
//! convergence studies and nonlocal TV inpainting.
//!
//! Exit codes: 0 success, 1 numeric failure, 2 usage or I/O error. Failures
//! print one JSON line `{"error": kind, "exit_code": n, "message": ...}` to stderr.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pim_core::PimError;

use config::{RunConfig, Settings};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Core(PimError),
    /// Results were written but a numeric target was missed.
    Numeric(String),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Numeric(_) => "numeric",
            CliError::Core(e) => match e {
                PimError::Io { .. } => "io",
                PimError::Parse { .. } => "parse",
                PimError::Validation(_) | PimError::Dimension { .. } => "validation",
                PimError::InsufficientPoints { .. } | PimError::InsufficientSpread(_) => "insufficient_data",
                PimError::OutOfReach(_) | PimError::IsolatedPoint(_) => "kernel_reach",
                PimError::Singular { .. } => "singular",
                PimError::NotConverged { .. } | PimError::AlmNotConverged { .. } | PimError::Outer { .. } => {
                    "not_converged"
                }
                PimError::Numeric(_) | PimError::SpectralAnomaly { .. } => "numeric",
            },
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind() {
            "usage" | "io" | "parse" | "validation" => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) => f.write_str(m),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<PimError> for CliError {
    fn from(e: PimError) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "pim", version, about = "Point integral method solvers on point clouds")]
struct Cli {
    /// JSON configuration; command-line flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long = "rng-seed", global = true, default_value_t = 0)]
    rng_seed: u64,
    /// Worker threads for the parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ProblemArgs {
    /// Built-in test problem: disk, annulus, cap (and circle for `sample`/`eig`).
    #[arg(long)]
    geometry: Option<String>,
    /// Approximate number of sample points for a built-in geometry.
    #[arg(long)]
    n: Option<usize>,
    /// Uniform random disk sampling (seeded) instead of the polar grid.
    #[arg(long)]
    random: bool,
    /// Point cloud CSV, used instead of a built-in geometry.
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Per-point CSV with columns `index,p,f` and optionally `b`, `g`, `robin`, `u_exact`.
    #[arg(long)]
    fields: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct KernelArgs {
    /// Kernel family: gaussian or smooth_bump.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    knn: Option<usize>,
    /// Explicit global bandwidth t.
    #[arg(long)]
    t: Option<f64>,
    /// Gaussian truncation radius in units of sqrt(t).
    #[arg(long)]
    truncation: Option<f64>,
    /// Per-point bandwidth t_i = (k-th neighbor radius)².
    #[arg(long)]
    adaptive: bool,
}

#[derive(Args, Debug, Default)]
struct BoundaryArgs {
    /// neumann, dirichlet or robin.
    #[arg(long)]
    boundary: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct SolverArgs {
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    alm_beta: Option<f64>,
    #[arg(long)]
    alm_tol: Option<f64>,
    #[arg(long)]
    alm_max_outer: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a built-in cloud and its manufactured fields.
    Sample {
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Solve one boundary value problem and write `solution.csv`.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        boundary: BoundaryArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the last ALM iterate (and exit 1) when the outer loop stalls.
        #[arg(long)]
        allow_unconverged: bool,
    },
    /// Smallest eigenpairs of the generalized problem; writes `eigenvalues.csv`.
    Eig {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        boundary: BoundaryArgs,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        eig_tol: Option<f64>,
        #[arg(long)]
        shift: Option<f64>,
        /// Also write the first K eigenvectors.
        #[arg(long)]
        vectors: Option<usize>,
    },
    /// Convergence study over several cloud sizes; writes `convergence.csv`.
    Converge {
        #[arg(long)]
        geometry: Option<String>,
        /// Comma-separated point counts, ascending.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        boundary: BoundaryArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Keep the last ALM iterate instead of aborting the study.
        #[arg(long)]
        allow_unconverged: bool,
    },
    /// Nonlocal TV inpainting of a PGM image; writes `restored.pgm` and `report.txt`.
    Inpaint {
        #[arg(long)]
        image: Option<PathBuf>,
        /// PGM mask, nonzero pixels are known; otherwise `--subsample` is used.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Fraction of pixels kept at random (seeded by `--rng-seed`).
        #[arg(long)]
        subsample: Option<f64>,
        /// Ground truth for the RMSE/PSNR report.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_outer: Option<usize>,
        #[arg(long)]
        patch: Option<usize>,
        #[arg(long)]
        knn: Option<usize>,
        /// Penalty weight; default is exact elimination of the known pixels.
        #[arg(long)]
        constraint_beta: Option<f64>,
        #[arg(long)]
        rel_tol: Option<f64>,
    },
    /// Check a kernel profile against the kernel assumptions.
    VerifyKernel {
        #[arg(long)]
        kernel: Option<String>,
    },
}

impl ProblemArgs {
    fn apply(&self, s: &mut Settings) {
        s.geometry = self.geometry.clone();
        s.n = self.n;
        s.random = self.random.then_some(true);
        s.cloud = self.cloud.clone();
        s.fields = self.fields.clone();
    }
}

impl KernelArgs {
    fn apply(&self, s: &mut Settings) {
        s.kernel.family = self.kernel.clone();
        s.kernel.knn = self.knn;
        s.kernel.t = self.t;
        s.kernel.truncation = self.truncation;
        s.kernel.adaptive = self.adaptive.then_some(true);
    }
}

impl BoundaryArgs {
    fn apply(&self, s: &mut Settings) {
        s.boundary.kind = self.boundary.clone();
        s.boundary.beta = self.beta;
    }
}

impl SolverArgs {
    fn apply(&self, s: &mut Settings) {
        s.solver.rel_tol = self.rel_tol;
        s.solver.max_iter = self.max_iter;
        s.solver.alm_beta = self.alm_beta;
        s.solver.alm_tol = self.alm_tol;
        s.solver.alm_max_outer = self.alm_max_outer;
    }
}

/// Command name and the settings given on the command line.
fn flag_settings(command: &Command) -> (&'static str, Settings) {
    let mut s = Settings::default();
    let name = match command {
        Command::Sample { problem } => {
            problem.apply(&mut s);
            "sample"
        }
        Command::Solve {
            problem,
            kernel,
            boundary,
            solver,
            allow_unconverged,
        } => {
            problem.apply(&mut s);
            kernel.apply(&mut s);
            boundary.apply(&mut s);
            solver.apply(&mut s);
            s.allow_unconverged = allow_unconverged.then_some(true);
            "solve"
        }
        Command::Eig {
            problem,
            kernel,
            boundary,
            count,
            eig_tol,
            shift,
            vectors,
        } => {
            problem.apply(&mut s);
            kernel.apply(&mut s);
            boundary.apply(&mut s);
            s.solver.eig_count = *count;
            s.solver.eig_tol = *eig_tol;
            s.solver.eig_shift = *shift;
            s.vectors = *vectors;
            "eig"
        }
        Command::Converge {
            geometry,
            levels,
            kernel,
            boundary,
            solver,
            allow_unconverged,
        } => {
            s.geometry = geometry.clone();
            s.levels = levels.clone();
            kernel.apply(&mut s);
            boundary.apply(&mut s);
            solver.apply(&mut s);
            s.allow_unconverged = allow_unconverged.then_some(true);
            "converge"
        }
        Command::Inpaint {
            image,
            mask,
            subsample,
            truth,
            epsilon,
            max_outer,
            patch,
            knn,
            constraint_beta,
            rel_tol,
        } => {
            s.image = image.clone();
            s.mask = mask.clone();
            s.truth = truth.clone();
            s.tv.subsample = *subsample;
            s.tv.epsilon = *epsilon;
            s.tv.max_outer = *max_outer;
            s.tv.patch = *patch;
            s.tv.knn = *knn;
            s.tv.constraint_beta = *constraint_beta;
            s.solver.rel_tol = *rel_tol;
            "inpaint"
        }
        Command::VerifyKernel { kernel } => {
            s.kernel.family = kernel.clone();
            "verify-kernel"
        }
    };
    (name, s)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let (name, flags) = flag_settings(&cli.command);
    let base = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let mut settings = base.merge(&flags);
    settings.resolve_paths()?;
    let config = RunConfig {
        command: name.to_string(),
        seed: cli.rng_seed,
        settings,
        out: cli.out,
    };
    commands::dispatch(&config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            report(&CliError::Usage(e.kind().to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code())
        }
    }
}

fn report(e: &CliError) {
    let line = serde_json::json!({
        "error": e.kind(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    });
    eprintln!("{line}");
}
