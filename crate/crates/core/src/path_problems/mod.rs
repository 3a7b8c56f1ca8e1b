//! Regularization paths with warm starts, synthetic test problems, and the
//! percent-error sweeps built on them.

mod generators;
mod sweep;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, ArrayView1};

pub use generators::{
    add_noise, build_problem, derive_seed, gen_matrix, gen_sparse_signal, problem_from_signal,
    MatrixKind, NoiseMode, Synthetic, SyntheticSpec,
};
pub use sweep::{median, sweep_contours, trial_seed, SweepRow, SweepSpec};

use crate::error::{Error, Result};
use crate::objectives::{f_p_value, norm2, ProblemData};
use crate::solvers::{
    fista, ista, newton, nonlinear_cg, steepest_descent, IterateTrace, Solution, SolverConfig,
};

/// Descending geometric grid of regularization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TauGrid {
    pub values: Vec<f64>,
    pub tau_max: f64,
}

pub const DEFAULT_TAU_POINTS: usize = 30;
pub const DEFAULT_TAU_START_DIV: f64 = 10.0;
pub const DEFAULT_TAU_END_DIV: f64 = 5e8;

impl TauGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 30 points from `tau_max / 10` down to `tau_max / 5e8`.
    pub fn default_for(prob: &ProblemData) -> Result<Self> {
        tau_grid(prob, DEFAULT_TAU_POINTS, DEFAULT_TAU_START_DIV, DEFAULT_TAU_END_DIV)
    }
}

/// `n_points` values from `tau_max / start_div` to `tau_max / end_div`,
/// evenly spaced in `log tau`; both endpoints are exact.
pub fn tau_grid(prob: &ProblemData, n_points: usize, start_div: f64, end_div: f64) -> Result<TauGrid> {
    if n_points < 2 {
        return Err(Error::InvalidConfig(format!("tau grid needs at least 2 points, got {n_points}")));
    }
    if !(start_div > 0.0 && start_div < end_div && end_div.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "tau grid divisors must satisfy 0 < start ({start_div}) < end ({end_div})"
        )));
    }
    let tau_max = prob.tau_max();
    if tau_max == 0.0 {
        return Err(Error::DegenerateProblem("A^T b is zero".into()));
    }
    let first = tau_max / start_div;
    let last = tau_max / end_div;
    let (l0, l1) = (first.ln(), last.ln());
    let steps = (n_points - 1) as f64;
    let values = (0..n_points)
        .map(|k| {
            if k == 0 {
                first
            } else if k == n_points - 1 {
                last
            } else {
                (l0 + (l1 - l0) * k as f64 / steps).exp()
            }
        })
        .collect();
    Ok(TauGrid { values, tau_max })
}

/// Solver run at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathSolver {
    SteepestDescent,
    ConjugateGradient,
    /// CG, then Newton, then CG again, with `sigma` carried through the stages.
    CgNewtonSandwich {
        pre: usize,
        newton: usize,
        post: usize,
    },
    Ista,
    Fista,
}

impl PathSolver {
    pub const fn sandwich() -> Self {
        PathSolver::CgNewtonSandwich {
            pre: 30,
            newton: 5,
            post: 15,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PathSolver::SteepestDescent => "sd",
            PathSolver::ConjugateGradient => "cg",
            PathSolver::CgNewtonSandwich { .. } => "cg-newton",
            PathSolver::Ista => "ista",
            PathSolver::Fista => "fista",
        }
    }
}

impl fmt::Display for PathSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PathSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sd" => Ok(PathSolver::SteepestDescent),
            "cg" => Ok(PathSolver::ConjugateGradient),
            "cg-newton" => Ok(PathSolver::sandwich()),
            "ista" => Ok(PathSolver::Ista),
            "fista" => Ok(PathSolver::Fista),
            other => Err(Error::InvalidConfig(format!("unknown solver '{other}'"))),
        }
    }
}

/// A solver with its configuration and a display label.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMethod {
    pub label: String,
    pub solver: PathSolver,
    pub config: SolverConfig,
}

impl PathMethod {
    /// Labelled by solver name, plus `p` when it is not 1.
    pub fn new(solver: PathSolver, config: SolverConfig) -> Self {
        let label = if config.p == 1.0 || matches!(solver, PathSolver::Ista | PathSolver::Fista) {
            solver.name().to_string()
        } else {
            format!("{}-p{}", solver.name(), config.p)
        };
        PathMethod {
            label,
            solver,
            config,
        }
    }

    pub fn with_label(self, label: impl Into<String>) -> Self {
        PathMethod {
            label: label.into(),
            ..self
        }
    }
}

/// The four methods compared in the image experiment: FISTA, CG with
/// `p = 1`, the CG/Newton sandwich, and CG with `p = 0.83`.
pub fn image_methods(cg_iters: usize, fista_iters: usize) -> Vec<PathMethod> {
    vec![
        PathMethod::new(PathSolver::Fista, SolverConfig::new(0.0, 1.0).with_iters(fista_iters)),
        PathMethod::new(PathSolver::ConjugateGradient, SolverConfig::new(0.0, 1.0).with_iters(cg_iters)),
        PathMethod::new(PathSolver::sandwich(), SolverConfig::new(0.0, 1.0)),
        PathMethod::new(PathSolver::ConjugateGradient, SolverConfig::new(0.0, 0.83).with_iters(cg_iters)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub tau: f64,
    pub solution: Array1<f64>,
    pub residual_norm: f64,
    pub percent_error: Option<f64>,
    pub f1_value: f64,
    pub iterations: usize,
    pub wall_seconds: f64,
}

/// `100 ||estimate - truth|| / ||truth||`.
pub fn percent_error(estimate: ArrayView1<'_, f64>, truth: ArrayView1<'_, f64>) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: estimate.len(),
            context: "estimate length",
        });
    }
    let t = norm2(truth);
    if t == 0.0 {
        return Err(Error::Domain("percent error against a zero ground truth".into()));
    }
    Ok(100.0 * norm2((&estimate - &truth).view()) / t)
}

/// Smallest percent error along a path, if ground truth was known.
pub fn min_percent_error(records: &[PathRecord]) -> Option<f64> {
    records
        .iter()
        .filter_map(|r| r.percent_error)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
}

/// The record whose residual norm is closest to the noise level `noise_norm`.
pub fn discrepancy_choice(records: &[PathRecord], noise_norm: f64) -> Option<&PathRecord> {
    records.iter().min_by(|a, b| {
        let da = (a.residual_norm - noise_norm).abs();
        let db = (b.residual_norm - noise_norm).abs();
        da.total_cmp(&db)
    })
}

/// Outcome of one solve at a fixed `tau`.
#[derive(Debug, Clone)]
pub struct PointSolve {
    pub x: Array1<f64>,
    pub iterations: usize,
    /// Per-iteration records of the smooth solvers (empty for ISTA/FISTA).
    pub trace: IterateTrace,
}

/// Solve at `cfg.tau` from `x0`.
pub fn solve_at(
    prob: &ProblemData,
    solver: PathSolver,
    cfg: &SolverConfig,
    x0: ArrayView1<'_, f64>,
) -> Result<PointSolve> {
    let smooth = |sol: Solution| PointSolve {
        iterations: sol.trace.len(),
        x: sol.x,
        trace: sol.trace,
    };
    let proximal = |x: Array1<f64>| PointSolve {
        x,
        iterations: cfg.max_iters,
        trace: IterateTrace::default(),
    };
    match solver {
        PathSolver::SteepestDescent => Ok(smooth(steepest_descent(prob, cfg, x0)?)),
        PathSolver::ConjugateGradient => Ok(smooth(nonlinear_cg(prob, cfg, x0)?)),
        PathSolver::CgNewtonSandwich { pre, newton: nt, post } => {
            let sigma0 = cfg.initial_sigma(x0);
            let stage = |done: usize, max_iters: usize| SolverConfig {
                sigma0: Some(cfg.sigma_at(sigma0, done)),
                max_iters,
                ..*cfg
            };
            let a = nonlinear_cg(prob, &stage(0, pre), x0)?;
            let mut trace = a.trace;
            let b = newton(prob, &stage(trace.len(), nt), a.x.view())?;
            trace.extend(b.trace);
            let c = nonlinear_cg(prob, &stage(trace.len(), post), b.x.view())?;
            trace.extend(c.trace);
            Ok(PointSolve {
                x: c.x,
                iterations: trace.len(),
                trace,
            })
        }
        PathSolver::Ista => Ok(proximal(ista(prob, cfg.tau, cfg.max_iters, x0)?)),
        PathSolver::Fista => Ok(proximal(fista(prob, cfg.tau, cfg.max_iters, x0)?)),
    }
}

/// Solve along the grid in descending order, warm-starting each `tau` from
/// the previous solution (zero at the first). The smoothing schedule
/// restarts at every `tau`.
pub fn run_path(
    prob: &ProblemData,
    solver: PathSolver,
    cfg: &SolverConfig,
    grid: &TauGrid,
) -> Result<Vec<PathRecord>> {
    let n = prob.cols();
    let mut x = Array1::zeros(n);
    let mut records = Vec::with_capacity(grid.len());
    for &tau in &grid.values {
        let at = |e: Error| Error::AtTau {
            tau,
            source: Box::new(e),
        };
        let local = cfg.with_tau(tau);
        let start = Instant::now();
        let PointSolve { x: next, iterations, .. } =
            solve_at(prob, solver, &local, x.view()).map_err(at)?;
        let wall_seconds = start.elapsed().as_secs_f64();
        let residual_norm = prob.residual_norm(next.view()).map_err(at)?;
        let f1_value = f_p_value(prob, next.view(), 1.0, tau).map_err(at)?;
        let percent_error = match prob.truth() {
            Some(t) => Some(percent_error(next.view(), t).map_err(at)?),
            None => None,
        };
        records.push(PathRecord {
            tau,
            solution: next.clone(),
            residual_norm,
            percent_error,
            f1_value,
            iterations,
            wall_seconds,
        });
        x = next;
    }
    Ok(records)
}
