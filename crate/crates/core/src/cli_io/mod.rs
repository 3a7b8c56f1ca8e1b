//! Command-line front end and file formats.
//!
//! Matrices and vectors are MatrixMarket files (vectors as one-column
//! arrays); tables are CSV with a header row. Every output file is written
//! to a temporary file next to its destination and renamed into place, so
//! a failed run never leaves a truncated file behind.

mod matrix_market;
mod records;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2, ArrayView1};

pub use matrix_market::{format_matrix, parse_matrix, read_matrix, read_vector, write_matrix, write_vector};
pub use records::{
    fmt_f64, path_csv, read_path_records, read_sweep, sweep_csv, trace_csv, write_path_records,
    write_sweep, write_trace, PathRow, TraceRow, PATH_COLUMNS, SWEEP_COLUMNS, TRACE_COLUMNS,
};

use crate::error::{Error, Result};
use crate::line_search::{LineSearchConfig, LineSearchMethod};
use crate::objectives::{f_p_value, ProblemData};
use crate::path_problems::{
    build_problem, derive_seed, gen_matrix, min_percent_error, percent_error, problem_from_signal,
    run_path, solve_at, sweep_contours, tau_grid, trial_seed, MatrixKind, NoiseMode, PathMethod,
    PathSolver, SweepSpec, SyntheticSpec, TauGrid, DEFAULT_TAU_END_DIV, DEFAULT_TAU_POINTS,
    DEFAULT_TAU_START_DIV,
};
use crate::scalar_kernels::SmoothingKind;
use crate::solvers::{fista_observed, Momentum, SolverConfig, Threshold};

/// Write `bytes` to `path` via a sibling temporary file and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Files produced by one command, written only once everything succeeded.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (path, bytes) in self.files {
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sparse-smooth",
    version,
    about = "Sparse least squares with smoothed l1/lp penalties, plus ISTA/FISTA baselines"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic problem and write A, x and b as MatrixMarket files.
    Generate(GenerateArgs),
    /// Solve at a single tau; writes the solution and the iteration trace.
    Solve(SolveArgs),
    /// Warm-started regularization path; writes one CSV row per tau.
    Path(PathArgs),
    /// Median min-over-tau percent error over a grid of sparsity and noise levels.
    Sweep(SweepArgs),
    /// Recover a sparse image with FISTA, CG (p=1), CG+Newton and CG (p=0.83).
    ImageDemo(ImageDemoArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GeneratorArgs {
    /// Matrix family: type-i, type-ii or type-iii.
    #[arg(long, default_value = "type-i")]
    pub matrix_kind: MatrixKind,
    #[arg(long = "m", default_value_t = 200)]
    pub m: usize,
    #[arg(long = "n", default_value_t = 200)]
    pub n: usize,
    /// Nonzeros of the ground-truth signal.
    #[arg(long, default_value_t = 20)]
    pub nnz: usize,
    /// Noise level relative to ||Ax|| (measurement) or ||x|| (signal).
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Where the noise enters: measurement (b = Ax + e) or signal (b = A(x + e)).
    #[arg(long, default_value = "measurement")]
    pub noise_mode: NoiseMode,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl GeneratorArgs {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            kind: self.matrix_kind,
            m: self.m,
            n: self.n,
            nnz: self.nnz,
            noise: self.noise,
            noise_mode: self.noise_mode,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Read A from a MatrixMarket file instead of generating a problem.
    #[arg(long, requires = "rhs")]
    pub matrix: Option<PathBuf>,
    /// Right-hand side b (MatrixMarket vector); used with --matrix.
    #[arg(long, requires = "matrix")]
    pub rhs: Option<PathBuf>,
    /// Optional ground truth x for percent errors; used with --matrix.
    #[arg(long, requires = "matrix")]
    pub truth: Option<PathBuf>,
}

impl ProblemArgs {
    fn load(&self) -> Result<ProblemData> {
        match (&self.matrix, &self.rhs) {
            (Some(a), Some(b)) => {
                let prob = ProblemData::new(read_matrix(a)?, read_vector(b)?)?;
                match &self.truth {
                    Some(t) => prob.with_truth(read_vector(t)?),
                    None => Ok(prob),
                }
            }
            _ => Ok(build_problem(&self.generator.spec(), problem_seed(self.generator.seed))?.problem),
        }
    }
}

/// Options shared by every solver.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Initial smoothing width [default: 0.1 max(1, ||x0||_inf)].
    #[arg(long)]
    pub sigma0: Option<f64>,
    /// Annealing factor for the smoothing width.
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    /// Iterations per tau for sd and cg.
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    /// Iterations per tau for ista and fista.
    #[arg(long, default_value_t = 100)]
    pub proximal_iters: usize,
    /// backtracking, taylor-hessian or secant-fd [default: taylor-hessian for p=1, secant-fd for p<1].
    #[arg(long)]
    pub line_search: Option<LineSearchMethod>,
    /// soft, hard or optimality [default: soft for p=1, hard for p<1].
    #[arg(long)]
    pub threshold: Option<Threshold>,
    /// Smoothing of |t|: conv-phi, conv-phi-shifted, conv-phi-hat, conv-phi-gauss-shift, sqrt-eps, huber.
    #[arg(long, default_value = "conv-phi")]
    pub kind: SmoothingKind,
    /// Threshold at tau itself rather than at the operator-scaled level.
    #[arg(long)]
    pub unscaled_threshold: bool,
}

impl SolverArgs {
    fn config(&self, solver: PathSolver) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(1.0, self.p);
        cfg.sigma0 = self.sigma0;
        cfg.alpha = self.alpha;
        cfg.kind = self.kind;
        cfg.max_iters = match solver {
            PathSolver::Ista | PathSolver::Fista => self.proximal_iters,
            _ => self.iters,
        };
        if let Some(method) = self.line_search {
            cfg.line_search = LineSearchConfig::default().with_method(method);
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        cfg.scale_threshold = !self.unscaled_threshold;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = DEFAULT_TAU_POINTS)]
    pub tau_points: usize,
    /// First tau is ||A^T b||_inf divided by this.
    #[arg(long, default_value_t = DEFAULT_TAU_START_DIV)]
    pub tau_start_div: f64,
    /// Last tau is ||A^T b||_inf divided by this.
    #[arg(long, default_value_t = DEFAULT_TAU_END_DIV)]
    pub tau_end_div: f64,
}

impl GridArgs {
    fn grid(&self, prob: &ProblemData) -> Result<TauGrid> {
        tau_grid(prob, self.tau_points, self.tau_start_div, self.tau_end_div)
    }

    fn validate(&self) -> Result<()> {
        if self.tau_points < 2 || !(self.tau_start_div > 0.0 && self.tau_start_div < self.tau_end_div) {
            return Err(Error::InvalidConfig(format!(
                "need --tau-points >= 2 and 0 < --tau-start-div < --tau-end-div, got {}, {}, {}",
                self.tau_points, self.tau_start_div, self.tau_end_div
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// sd, cg, cg-newton, ista or fista.
    #[arg(long, default_value = "cg")]
    pub solver: PathSolver,
    #[command(flatten)]
    pub options: SolverArgs,
    /// Regularization parameter [default: ||A^T b||_inf / 100].
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// sd, cg, cg-newton, ista or fista.
    #[arg(long, default_value = "cg")]
    pub solver: PathSolver,
    #[command(flatten)]
    pub options: SolverArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, default_value = "type-i")]
    pub matrix_kind: MatrixKind,
    #[arg(long = "m", default_value_t = 200)]
    pub m: usize,
    #[arg(long = "n", default_value_t = 200)]
    pub n: usize,
    /// Comma-separated nonzero counts [default: 1%, 5%, 10%, 20%, 30% of n].
    #[arg(long, value_delimiter = ',')]
    pub nnz: Vec<usize>,
    /// Comma-separated noise fractions.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
    pub noise: Vec<f64>,
    #[arg(long, default_value = "measurement")]
    pub noise_mode: NoiseMode,
    /// Comma-separated solvers.
    #[arg(long = "solver", value_delimiter = ',', default_value = "cg,fista")]
    pub solvers: Vec<PathSolver>,
    #[command(flatten)]
    pub options: SolverArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ImageDemoArgs {
    /// Sparse image as a MatrixMarket matrix; pixels are taken column by column.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value = "type-ii")]
    pub matrix_kind: MatrixKind,
    /// Measurements [default: ceil(pixels * 500 / 525)].
    #[arg(long = "m")]
    pub m: Option<usize>,
    /// Noise level relative to the image norm.
    #[arg(long, default_value_t = 0.25)]
    pub noise: f64,
    #[arg(long, default_value = "signal")]
    pub noise_mode: NoiseMode,
    /// CG iterations per tau.
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    /// FISTA iterations per tau.
    #[arg(long, default_value_t = 100)]
    pub proximal_iters: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Seed of the problem instance used by `generate`, `solve` and `path`;
/// identical to the first trial of the first `sweep` cell.
pub fn problem_seed(seed: u64) -> u64 {
    trial_seed(seed, 0, 0)
}

/// Parse `argv` and run; returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(written) => {
            for path in written {
                println!("wrote {}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Execute a parsed command; returns the files written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Generate(args) => generate(&args),
        Command::Solve(args) => solve(&args),
        Command::Path(args) => path(&args),
        Command::Sweep(args) => sweep(&args),
        Command::ImageDemo(args) => image_demo(&args),
    }
}

fn generate(args: &GenerateArgs) -> Result<Vec<PathBuf>> {
    let s = build_problem(&args.generator.spec(), problem_seed(args.generator.seed))?;
    let prob = &s.problem;
    let truth = prob.truth().expect("generated problems carry ground truth");
    let mut out = Outputs::default();
    out.add(args.out.join("A.mtx"), format_matrix(prob.matrix()).into_bytes());
    out.add(args.out.join("x.mtx"), format_vector(truth).into_bytes());
    out.add(args.out.join("b.mtx"), format_vector(prob.rhs()).into_bytes());
    out.commit(&args.out)
}

fn format_vector(v: ArrayView1<'_, f64>) -> String {
    format_matrix(v.insert_axis(ndarray::Axis(1)))
}

fn solve(args: &SolveArgs) -> Result<Vec<PathBuf>> {
    let solver = args.solver;
    let base = args.options.config(solver)?;
    let prob = args.problem.load()?;
    let tau = match args.tau {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(Error::InvalidConfig(format!("--tau must be positive, got {t}"))),
        None => prob.tau_max() / 100.0,
    };
    if tau == 0.0 {
        return Err(Error::DegenerateProblem("A^T b is zero".into()));
    }
    let cfg = base.with_tau(tau);
    let x0 = Array1::zeros(prob.cols());
    let (x, rows) = match solver {
        PathSolver::Ista | PathSolver::Fista => {
            let momentum = if solver == PathSolver::Fista {
                Momentum::Nesterov
            } else {
                Momentum::None
            };
            let mut rows = Vec::with_capacity(cfg.max_iters);
            let mut failure = None;
            let x = fista_observed(&prob, tau, cfg.max_iters, x0.view(), momentum, |k, x| {
                let row = f_p_value(&prob, x, 1.0, tau).and_then(|f1| {
                    Ok(TraceRow {
                        iteration: k,
                        sigma: None,
                        h_value: None,
                        f1_value: f1,
                        residual_norm: prob.residual_norm(x)?,
                        step: None,
                        nonzeros: x.iter().filter(|v| **v != 0.0).count(),
                        beta: None,
                        beta_clamped: false,
                        note: "regular".into(),
                    })
                });
                match row {
                    Ok(r) => rows.push(r),
                    Err(e) => {
                        failure.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            (x, rows)
        }
        _ => {
            let point = solve_at(&prob, solver, &cfg, x0.view())?;
            let rows = point.trace.records.iter().map(TraceRow::from).collect();
            (point.x, rows)
        }
    };
    let f1 = f_p_value(&prob, x.view(), 1.0, tau)?;
    print!(
        "tau {tau:.6e}  F1 {f1:.6e}  residual {:.6e}",
        prob.residual_norm(x.view())?
    );
    if let Some(t) = prob.truth() {
        print!("  percent_error {:.4}", percent_error(x.view(), t)?);
    }
    println!();
    let mut out = Outputs::default();
    out.add(args.out.join("solution.mtx"), format_vector(x.view()).into_bytes());
    out.add(args.out.join("trace.csv"), trace_csv(&rows)?);
    out.commit(&args.out)
}

fn path(args: &PathArgs) -> Result<Vec<PathBuf>> {
    let solver = args.solver;
    let cfg = args.options.config(solver)?;
    args.grid.validate()?;
    let prob = args.problem.load()?;
    let grid = args.grid.grid(&prob)?;
    let records = run_path(&prob, solver, &cfg, &grid)?;
    if let Some(best) = min_percent_error(&records) {
        println!("min percent error {best:.4}");
    }
    let mut out = Outputs::default();
    out.add(args.out.join("path.csv"), path_csv(&records)?);
    out.commit(&args.out)
}

fn default_nnz_grid(n: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = [0.01, 0.05, 0.1, 0.2, 0.3]
        .iter()
        .map(|f| ((f * n as f64).round() as usize).clamp(1, n.max(1)))
        .collect();
    grid.dedup();
    grid
}

fn sweep(args: &SweepArgs) -> Result<Vec<PathBuf>> {
    args.grid.validate()?;
    if args.solvers.is_empty() {
        return Err(Error::InvalidConfig("--solver needs at least one entry".into()));
    }
    let methods = args
        .solvers
        .iter()
        .map(|&s| Ok(PathMethod::new(s, args.options.config(s)?)))
        .collect::<Result<Vec<_>>>()?;
    let nnz_grid = if args.nnz.is_empty() {
        default_nnz_grid(args.n)
    } else {
        args.nnz.clone()
    };
    let spec = SweepSpec {
        kind: args.matrix_kind,
        m: args.m,
        n: args.n,
        nnz_grid,
        noise_grid: args.noise.clone(),
        noise_mode: args.noise_mode,
        methods,
        trials: args.trials,
        seed: args.seed,
        tau_points: args.grid.tau_points,
        tau_start_div: args.grid.tau_start_div,
        tau_end_div: args.grid.tau_end_div,
    };
    let rows = sweep_contours(&spec)?;
    for r in rows.iter().filter_map(|r| r.error.as_ref().map(|e| (r, e))) {
        eprintln!(
            "warning: nnz {} noise {} {}: {}",
            r.0.nnz, r.0.noise_fraction, r.0.solver, r.1
        );
    }
    let mut out = Outputs::default();
    out.add(args.out.join("sweep.csv"), sweep_csv(&rows)?);
    out.commit(&args.out)
}

/// Per-method outcome of the image experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageResult {
    pub method: String,
    pub percent_error: f64,
    pub tau: f64,
    pub recovered: Array1<f64>,
}

/// Run the four image methods on `prob` and keep, for each, the point of
/// its path with the smallest percent error.
pub fn compare_methods(prob: &ProblemData, methods: &[PathMethod], grid: &TauGrid) -> Result<Vec<ImageResult>> {
    methods
        .iter()
        .map(|m| {
            let records = run_path(prob, m.solver, &m.config, grid)?;
            let best = records
                .iter()
                .filter(|r| r.percent_error.is_some())
                .min_by(|a, b| a.percent_error.unwrap().total_cmp(&b.percent_error.unwrap()))
                .ok_or_else(|| Error::DegenerateProblem("no ground truth to compare against".into()))?;
            Ok(ImageResult {
                method: m.label.clone(),
                percent_error: best.percent_error.unwrap(),
                tau: best.tau,
                recovered: best.solution.clone(),
            })
        })
        .collect()
}

fn image_demo(args: &ImageDemoArgs) -> Result<Vec<PathBuf>> {
    args.grid.validate()?;
    let image = read_matrix(&args.image)?;
    let (h, w) = image.dim();
    // column-major pixel order, matching the file layout
    let x: Array1<f64> = image.t().iter().copied().collect();
    let n = x.len();
    let m = args.m.unwrap_or_else(|| (n * 500).div_ceil(525));
    let seed = problem_seed(args.seed);
    let a = gen_matrix(args.matrix_kind, m, n, derive_seed(seed, 1))?;
    let s = problem_from_signal(a, x, args.noise, args.noise_mode, derive_seed(seed, 3))?;
    let grid = args.grid.grid(&s.problem)?;
    let methods = crate::path_problems::image_methods(args.iters, args.proximal_iters);
    for m in &methods {
        m.config.with_tau(1.0).validate()?;
    }
    let results = compare_methods(&s.problem, &methods, &grid)?;

    let mut table = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Numerical(format!("csv encoding failed: {e}"));
    table.write_record(["method", "percent_error", "tau"]).map_err(wrap)?;
    let mut out = Outputs::default();
    for r in &results {
        println!("{:>10}  {:.4}", r.method, r.percent_error);
        table
            .write_record([r.method.clone(), fmt_f64(r.percent_error), fmt_f64(r.tau)])
            .map_err(wrap)?;
        let img = Array2::from_shape_vec((w, h), r.recovered.to_vec())
            .expect("recovered image has the input's pixel count")
            .reversed_axes();
        out.add(
            args.out.join(format!("recovered_{}.mtx", r.method)),
            format_matrix(img.view()).into_bytes(),
        );
    }
    let bytes = table
        .into_inner()
        .map_err(|e| Error::Numerical(format!("csv encoding failed: {e}")))?;
    out.add(args.out.join("image_demo.csv"), bytes);
    out.commit(&args.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_nnz_grid_scales_with_n() {
        assert_eq!(default_nnz_grid(200), vec![2, 10, 20, 40, 60]);
        assert_eq!(default_nnz_grid(10), vec![1, 2, 3]);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
