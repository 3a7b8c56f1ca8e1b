//! Iterative minimizers.
//!
//! [`steepest_descent`], [`nonlinear_cg`] and [`newton`] work on the smooth
//! surrogate `H_{p,sigma}` with `sigma` annealed geometrically and a
//! thresholding step after every iteration. [`ista`] and [`fista`] are the
//! proximal baselines on the exact l1 functional.

mod proximal;
mod smooth;
mod threshold;

use std::fmt;

use ndarray::{Array1, ArrayView1};

pub use crate::objectives::spectral_norm_estimate;
pub use proximal::{fista, fista_observed, fista_with, ista, operator_scale, Momentum};
pub use smooth::{
    linear_cg, newton, nonlinear_cg, nonlinear_cg_with, steepest_descent, BetaRule, LinearCgOutcome,
};
pub use threshold::{hard_threshold, optimality_threshold, soft_threshold, Threshold};

use crate::error::{Error, Result};
use crate::line_search::{LineSearchConfig, LineSearchMethod};
use crate::objectives::{ObjectiveSpec, ProblemData};
use crate::scalar_kernels::{SmoothingKind, SIGMA_MIN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tau: f64,
    pub p: f64,
    /// Initial smoothing width; `None` means `0.1 * max(1, ||x0||_inf)`.
    pub sigma0: Option<f64>,
    /// Annealing factor, `sigma_{n+1} = alpha * sigma_n`.
    pub alpha: f64,
    pub max_iters: usize,
    pub kind: SmoothingKind,
    pub line_search: LineSearchConfig,
    pub threshold: Threshold,
    pub newton_inner_iters: usize,
    pub newton_tol: f64,
    /// Apply soft/hard thresholding at `c^2 tau` instead of `tau`, with `c^2`
    /// the operator scale used by ISTA/FISTA (1 when `||A|| <= 1`).
    pub scale_threshold: bool,
    /// Stop early once `||x_{n+1} - x_n|| <= stop_tol (1 + ||x_n||)`; zero runs the full budget.
    pub stop_tol: f64,
}

impl SolverConfig {
    /// Defaults for a given `(tau, p)`: conv-phi smoothing, `alpha = 0.8`,
    /// 50 iterations, soft thresholding with the Hessian line search for
    /// `p = 1`, hard thresholding with the secant line search for `p < 1`.
    pub fn new(tau: f64, p: f64) -> Self {
        let method = if p < 1.0 {
            LineSearchMethod::SecantFd
        } else {
            LineSearchMethod::TaylorHessian
        };
        SolverConfig {
            tau,
            p,
            sigma0: None,
            alpha: 0.8,
            max_iters: 50,
            kind: SmoothingKind::ConvPhi,
            line_search: LineSearchConfig::default().with_method(method),
            threshold: Threshold::default_for(p),
            newton_inner_iters: 15,
            newton_tol: 1e-10,
            scale_threshold: true,
            stop_tol: 0.0,
        }
    }

    pub fn with_tau(self, tau: f64) -> Self {
        SolverConfig { tau, ..self }
    }

    pub fn with_iters(self, max_iters: usize) -> Self {
        SolverConfig { max_iters, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if let Some(s) = self.sigma0 {
            if !(s >= SIGMA_MIN) || !s.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "sigma0 must be at least {SIGMA_MIN:e}, got {s}"
                )));
            }
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "stop_tol must be non-negative, got {}",
                self.stop_tol
            )));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "newton_tol must be positive, got {}",
                self.newton_tol
            )));
        }
        self.line_search.validate()?;
        if self.line_search.method == LineSearchMethod::TaylorHessian
            && !self.kind.has_second_derivative()
        {
            return Err(Error::InvalidConfig(format!(
                "the taylor-hessian line search needs second derivatives, which {} lacks",
                self.kind
            )));
        }
        self.objective(1.0)?;
        Ok(())
    }

    pub(crate) fn objective(&self, sigma: f64) -> Result<ObjectiveSpec> {
        ObjectiveSpec::new(self.p, self.tau, sigma, self.kind)
            .map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Starting smoothing width for a run from `x0`.
    pub fn initial_sigma(&self, x0: ArrayView1<'_, f64>) -> f64 {
        self.sigma0.unwrap_or_else(|| {
            let inf = x0.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            0.1 * inf.max(1.0)
        })
    }

    /// `sigma0 * alpha^n`, floored at the global minimum width.
    pub fn sigma_at(&self, sigma0: f64, n: usize) -> f64 {
        (sigma0 * self.alpha.powi(n as i32)).max(SIGMA_MIN)
    }
}

/// How the step size of one iteration was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepNote {
    /// The configured line search produced a usable step.
    Regular,
    /// The configured method failed; Armijo backtracking from 1 was used.
    Fallback,
    /// Backtracking failed too; a `1e-8` step was taken.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub iteration: usize,
    pub sigma: f64,
    pub h_value: f64,
    pub f1_value: f64,
    pub residual_norm: f64,
    /// Step length `mu` (1 for Newton steps).
    pub step: f64,
    pub nonzeros: usize,
    /// Polak-Ribière coefficient after clamping, CG only.
    pub beta: Option<f64>,
    /// Raw Polak-Ribière coefficient was negative and got clamped to zero.
    pub beta_clamped: bool,
    pub note: StepNote,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterateTrace {
    pub records: Vec<IterateRecord>,
}

impl IterateTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterateRecord> {
        self.records.last()
    }

    /// Append another trace, renumbering its iterations after ours.
    pub fn extend(&mut self, other: IterateTrace) {
        let offset = self.records.len();
        self.records
            .extend(other.records.into_iter().map(|mut r| {
                r.iteration += offset;
                r
            }));
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Array1<f64>,
    pub trace: IterateTrace,
}

/// A failed run together with the records completed before the failure.
#[derive(Debug)]
pub struct SolverFailure {
    pub error: Error,
    pub trace: IterateTrace,
}

impl fmt::Display for SolverFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after {} iterations", self.error, self.trace.len())
    }
}

impl std::error::Error for SolverFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<SolverFailure> for Error {
    fn from(f: SolverFailure) -> Self {
        f.error
    }
}

impl From<Error> for SolverFailure {
    fn from(error: Error) -> Self {
        SolverFailure {
            error,
            trace: IterateTrace::default(),
        }
    }
}

pub type SolveResult = std::result::Result<Solution, SolverFailure>;

/// `max{ g_new^T (g_new - g_old) / g_old^T g_old, 0 }`.
pub fn polak_ribiere_beta(g_new: ArrayView1<'_, f64>, g_old: ArrayView1<'_, f64>) -> Result<f64> {
    Ok(polak_ribiere_raw(g_new, g_old)?.max(0.0))
}

pub(crate) fn polak_ribiere_raw(
    g_new: ArrayView1<'_, f64>,
    g_old: ArrayView1<'_, f64>,
) -> Result<f64> {
    let denom = g_old.dot(&g_old);
    if denom == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    Ok((g_new.dot(&g_new) - g_new.dot(&g_old)) / denom)
}

pub(crate) fn nonzeros(x: ArrayView1<'_, f64>) -> usize {
    x.iter().filter(|v| **v != 0.0).count()
}

pub(crate) fn check_start(prob: &ProblemData, x0: ArrayView1<'_, f64>) -> Result<()> {
    prob.check_len(x0.len(), "initial guess length")?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("initial guess contains non-finite entries".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn beta_examples() {
        let g = array![1.0, -2.0, 0.5];
        assert_eq!(polak_ribiere_beta(g.view(), g.view()).unwrap(), 0.0);
        let a = array![1.0, 0.0];
        let b = array![0.0, 1.0];
        assert_eq!(polak_ribiere_beta(b.view(), a.view()).unwrap(), 1.0);
        // raw value negative: g_new . (g_new - g_old) = 1 - 3 < 0
        let small = array![1.0, 0.0];
        let big = array![3.0, 0.0];
        assert!(polak_ribiere_raw(small.view(), big.view()).unwrap() < 0.0);
        assert_eq!(polak_ribiere_beta(small.view(), big.view()).unwrap(), 0.0);
        let zero = array![0.0, 0.0];
        assert!(matches!(
            polak_ribiere_beta(a.view(), zero.view()),
            Err(Error::DegenerateGradient)
        ));
    }

    #[test]
    fn config_defaults() {
        let c1 = SolverConfig::new(0.1, 1.0);
        assert_eq!(c1.threshold, Threshold::Soft);
        assert_eq!(c1.line_search.method, LineSearchMethod::TaylorHessian);
        assert_eq!(c1.alpha, 0.8);
        assert_eq!(c1.newton_inner_iters, 15);
        let c2 = SolverConfig::new(0.1, 0.83);
        assert_eq!(c2.threshold, Threshold::Hard);
        assert_eq!(c2.line_search.method, LineSearchMethod::SecantFd);
        assert!(c2.validate().is_ok());

        let x0 = array![0.0, -4.0, 2.0];
        assert!((c1.initial_sigma(x0.view()) - 0.4).abs() < 1e-15);
        assert_eq!(c1.initial_sigma(array![0.0, 0.5].view()), 0.1);
        assert_eq!(c1.sigma_at(1.0, 1000), SIGMA_MIN);
    }

    #[test]
    fn config_validation() {
        let base = SolverConfig::new(0.1, 1.0);
        assert!(SolverConfig { alpha: 1.0, ..base }.validate().is_err());
        assert!(SolverConfig { sigma0: Some(0.0), ..base }.validate().is_err());
        assert!(SolverConfig { tau: -1.0, ..base }.validate().is_err());
        let lp_hat = SolverConfig {
            p: 0.5,
            kind: SmoothingKind::ConvPhiHat,
            ..base
        };
        assert!(lp_hat.validate().is_err());
    }
}
