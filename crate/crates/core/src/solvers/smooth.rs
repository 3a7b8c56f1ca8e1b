use ndarray::{Array1, ArrayView1};

use super::{
    check_start, operator_scale, Threshold, nonzeros, polak_ribiere_raw, IterateRecord, IterateTrace, SolveResult, Solution,
    SolverConfig, SolverFailure, StepNote,
};
use crate::error::{Error, Result};
use crate::line_search::{
    backtracking, secant_fd_step_from, secant_probe, taylor_hessian_step, LineSearchConfig,
    LineSearchMethod,
};
use crate::objectives::{
    gradient_with_fit, h_hessian, h_value, norm2, HessianOperator, ObjectiveSpec, ProblemData,
};

const STALLED_STEP: f64 = 1e-8;

/// How the nonlinear CG direction mixes in the previous direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaRule {
    PolakRibiere,
    /// `beta = 0` at every step, which reduces CG to steepest descent.
    Zero,
}

/// Shared per-run state: problem, configuration and the trace.
struct Run<'a> {
    prob: &'a ProblemData,
    cfg: &'a SolverConfig,
    sigma0: f64,
    trace: IterateTrace,
}

impl<'a> Run<'a> {
    fn start(prob: &'a ProblemData, cfg: &'a SolverConfig, x0: ArrayView1<'_, f64>) -> Result<Self> {
        cfg.validate()?;
        check_start(prob, x0)?;
        Ok(Run {
            prob,
            cfg,
            sigma0: cfg.initial_sigma(x0),
            trace: IterateTrace::default(),
        })
    }

    fn spec(&self, n: usize) -> Result<ObjectiveSpec> {
        self.cfg.objective(self.cfg.sigma_at(self.sigma0, n))
    }

    fn gradient(&self, spec: &ObjectiveSpec, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let fit = self.prob.fit_gradient(x)?;
        Ok(gradient_with_fit(spec, x, fit.view()))
    }

    fn value(&self, spec: &ObjectiveSpec, x: ArrayView1<'_, f64>) -> f64 {
        h_value(self.prob, spec, x).unwrap_or(f64::NAN)
    }

    /// Step length along `s` from `x`, with the fallback chain applied.
    fn step_size(
        &self,
        spec: &ObjectiveSpec,
        x: ArrayView1<'_, f64>,
        g: ArrayView1<'_, f64>,
        s: ArrayView1<'_, f64>,
    ) -> Result<(f64, StepNote)> {
        let ls = &self.cfg.line_search;
        let primary = match ls.method {
            LineSearchMethod::Backtracking => {
                let out = backtracking(|v| self.value(spec, v), g, x, s, ls)?;
                out.accepted.then_some(out.mu)
            }
            LineSearchMethod::TaylorHessian => {
                let hess = h_hessian(self.prob, spec, x)?;
                usable(taylor_hessian_step(g, &hess, s))
            }
            LineSearchMethod::SecantFd => {
                let xi = secant_probe(x, ls.xi_scale);
                let grad_fn = |v: ArrayView1<'_, f64>| {
                    self.gradient(spec, v)
                        .unwrap_or_else(|_| Array1::from_elem(v.len(), f64::NAN))
                };
                usable(secant_fd_step_from(g, grad_fn, x, s, xi))
            }
        };
        match primary {
            Some(mu) => Ok((mu, StepNote::Regular)),
            None => self.fallback_step(spec, x, g, s),
        }
    }

    /// Armijo backtracking from `mu = 1`; a tiny fixed step if even that fails.
    fn fallback_step(
        &self,
        spec: &ObjectiveSpec,
        x: ArrayView1<'_, f64>,
        g: ArrayView1<'_, f64>,
        s: ArrayView1<'_, f64>,
    ) -> Result<(f64, StepNote)> {
        let retry = LineSearchConfig {
            mu0: 1.0,
            ..self.cfg.line_search
        };
        let out = backtracking(|v| self.value(spec, v), g, x, s, &retry)?;
        if out.accepted {
            Ok((out.mu, StepNote::Fallback))
        } else {
            Ok((STALLED_STEP, StepNote::Stalled))
        }
    }

    fn threshold(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let out = self.cfg.threshold.apply(self.prob, x, self.threshold_level())?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("iterate became non-finite".into()));
        }
        Ok(out)
    }

    fn threshold_level(&self) -> f64 {
        match self.cfg.threshold {
            Threshold::Soft | Threshold::Hard if self.cfg.scale_threshold => {
                operator_scale(self.prob) * self.cfg.tau
            }
            _ => self.cfg.tau,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        n: usize,
        spec: &ObjectiveSpec,
        x: ArrayView1<'_, f64>,
        step: f64,
        beta: Option<f64>,
        beta_clamped: bool,
        note: StepNote,
    ) -> Result<()> {
        let r = self.prob.residual(x)?;
        let rr = r.dot(&r);
        let h = h_value(self.prob, spec, x)?;
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        let rec = IterateRecord {
            iteration: n,
            sigma: spec.sigma,
            h_value: h,
            f1_value: rr + 2.0 * self.cfg.tau * l1,
            residual_norm: rr.sqrt(),
            step,
            nonzeros: nonzeros(x),
            beta,
            beta_clamped,
            note,
        };
        if !rec.h_value.is_finite() || !rec.f1_value.is_finite() {
            return Err(Error::Numerical(format!(
                "objective diverged at iteration {n} (H = {}, F1 = {})",
                rec.h_value, rec.f1_value
            )));
        }
        self.trace.records.push(rec);
        Ok(())
    }

    fn converged(&self, old: ArrayView1<'_, f64>, new: ArrayView1<'_, f64>) -> bool {
        if self.cfg.stop_tol <= 0.0 {
            return false;
        }
        let diff = &new - &old;
        norm2(diff.view()) <= self.cfg.stop_tol * (1.0 + norm2(old))
    }

    fn fail(self, error: Error) -> SolverFailure {
        SolverFailure {
            error,
            trace: self.trace,
        }
    }
}

fn usable(step: Result<f64>) -> Option<f64> {
    match step {
        Ok(mu) if mu > 0.0 && mu.is_finite() => Some(mu),
        _ => None,
    }
}

/// Steepest descent on `H_{p,sigma_n}` with thresholding and annealing.
pub fn steepest_descent(prob: &ProblemData, cfg: &SolverConfig, x0: ArrayView1<'_, f64>) -> SolveResult {
    let mut run = Run::start(prob, cfg, x0)?;
    let mut x = x0.to_owned();
    for n in 0..cfg.max_iters {
        let step = (|| -> Result<(Array1<f64>, ObjectiveSpec, f64, StepNote)> {
            let spec = run.spec(n)?;
            let g = run.gradient(&spec, x.view())?;
            let s = -&g;
            let (mu, note) = run.step_size(&spec, x.view(), g.view(), s.view())?;
            let mut trial = x.clone();
            trial.scaled_add(mu, &s);
            Ok((run.threshold(trial.view())?, spec, mu, note))
        })();
        let (next, spec, mu, note) = match step {
            Ok(v) => v,
            Err(e) => return Err(run.fail(e)),
        };
        if let Err(e) = run.record(n, &spec, next.view(), mu, None, false, note) {
            return Err(run.fail(e));
        }
        let done = run.converged(x.view(), next.view());
        x = next;
        if done {
            break;
        }
    }
    Ok(Solution { x, trace: run.trace })
}

/// Polak-Ribière nonlinear conjugate gradients on `H_{p,sigma_n}`.
pub fn nonlinear_cg(prob: &ProblemData, cfg: &SolverConfig, x0: ArrayView1<'_, f64>) -> SolveResult {
    nonlinear_cg_with(prob, cfg, x0, BetaRule::PolakRibiere)
}

/// Each iteration: line search along `s`, threshold, then
/// `beta = max(PR(g_{n+1}, g_n), 0)` with both gradients at `sigma_n`, then
/// `s <- -grad H_{sigma_{n+1}}(x_{n+1}) + beta s`.
pub fn nonlinear_cg_with(
    prob: &ProblemData,
    cfg: &SolverConfig,
    x0: ArrayView1<'_, f64>,
    rule: BetaRule,
) -> SolveResult {
    let mut run = Run::start(prob, cfg, x0)?;
    let mut x = x0.to_owned();
    let first = run.spec(0).and_then(|spec| run.gradient(&spec, x.view()));
    let mut g = match first {
        Ok(g) => g,
        Err(e) => return Err(run.fail(e)),
    };
    let mut s = -&g;
    for n in 0..cfg.max_iters {
        let step = (|| -> Result<_> {
            let spec = run.spec(n)?;
            if g.dot(&s) >= 0.0 {
                // not a descent direction: restart
                s = -&g;
            }
            let (mu, note) = run.step_size(&spec, x.view(), g.view(), s.view())?;
            let mut trial = x.clone();
            trial.scaled_add(mu, &s);
            let next = run.threshold(trial.view())?;

            let fit = prob.fit_gradient(next.view())?;
            let g_same_sigma = gradient_with_fit(&spec, next.view(), fit.view());
            let (beta, clamped) = match rule {
                BetaRule::Zero => (0.0, false),
                BetaRule::PolakRibiere => match polak_ribiere_raw(g_same_sigma.view(), g.view()) {
                    Ok(raw) if raw.is_finite() => (raw.max(0.0), raw < 0.0),
                    Ok(_) | Err(Error::DegenerateGradient) => (0.0, false),
                    Err(e) => return Err(e),
                },
            };
            let next_spec = run.spec(n + 1)?;
            let g_next = gradient_with_fit(&next_spec, next.view(), fit.view());
            Ok((next, spec, mu, note, beta, clamped, g_next))
        })();
        let (next, spec, mu, note, beta, clamped, g_next) = match step {
            Ok(v) => v,
            Err(e) => return Err(run.fail(e)),
        };
        if let Err(e) = run.record(n, &spec, next.view(), mu, Some(beta), clamped, note) {
            return Err(run.fail(e));
        }
        s *= beta;
        s -= &g_next;
        g = g_next;
        let done = run.converged(x.view(), next.view());
        x = next;
        if done {
            break;
        }
    }
    Ok(Solution { x, trace: run.trace })
}

/// Result of [`linear_cg`].
#[derive(Debug, Clone)]
pub struct LinearCgOutcome {
    pub solution: Array1<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    /// Stopped because `p^T H p <= 0` for a search direction `p`.
    pub negative_curvature: bool,
}

/// Matrix-free conjugate gradients for `H d = rhs` from `d = 0`.
pub fn linear_cg(
    hess: &HessianOperator<'_>,
    rhs: ArrayView1<'_, f64>,
    max_iters: usize,
    rel_tol: f64,
) -> Result<LinearCgOutcome> {
    let n = rhs.len();
    let mut d = Array1::zeros(n);
    let mut r = rhs.to_owned();
    let rhs_norm = norm2(rhs);
    if rhs_norm == 0.0 {
        return Ok(LinearCgOutcome {
            solution: d,
            iterations: 0,
            relative_residual: 0.0,
            negative_curvature: false,
        });
    }
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let mut iterations = 0;
    let mut negative_curvature = false;
    while iterations < max_iters && rr.sqrt() > rel_tol * rhs_norm {
        let hp = hess.apply(p.view());
        let curvature = p.dot(&hp);
        if !curvature.is_finite() {
            return Err(Error::Numerical("inner solve produced a non-finite curvature".into()));
        }
        if curvature <= 0.0 {
            negative_curvature = true;
            break;
        }
        let alpha = rr / curvature;
        d.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &hp);
        let rr_next = r.dot(&r);
        p *= rr_next / rr;
        p += &r;
        rr = rr_next;
        iterations += 1;
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("inner solve diverged".into()));
    }
    Ok(LinearCgOutcome {
        solution: d,
        iterations,
        relative_residual: rr.sqrt() / rhs_norm,
        negative_curvature,
    })
}

/// Newton iterations `x <- Threshold(x + dx, tau)` with `dx` from a truncated
/// CG solve of `grad^2 H dx = -grad H`.
///
/// If the inner solve meets negative curvature before making any progress,
/// the iteration takes a backtracked steepest-descent step instead.
pub fn newton(prob: &ProblemData, cfg: &SolverConfig, x0: ArrayView1<'_, f64>) -> SolveResult {
    let mut run = Run::start(prob, cfg, x0)?;
    if !cfg.kind.has_second_derivative() {
        return Err(run.fail(Error::Unsupported(format!(
            "Newton's method needs second derivatives, which {} lacks",
            cfg.kind
        ))));
    }
    let mut x = x0.to_owned();
    for n in 0..cfg.max_iters {
        let step = (|| -> Result<_> {
            let spec = run.spec(n)?;
            let g = run.gradient(&spec, x.view())?;
            let hess = h_hessian(prob, &spec, x.view())?;
            let rhs = -&g;
            let inner = linear_cg(&hess, rhs.view(), cfg.newton_inner_iters, cfg.newton_tol)?;
            let stuck = inner.iterations == 0 && norm2(g.view()) > 0.0;
            let (delta, mu, note) = if stuck {
                let (mu, note) = run.fallback_step(&spec, x.view(), g.view(), rhs.view())?;
                (rhs * mu, mu, note)
            } else {
                (inner.solution, 1.0, StepNote::Regular)
            };
            let next = run.threshold((&x + &delta).view())?;
            Ok((next, spec, mu, note))
        })();
        let (next, spec, mu, note) = match step {
            Ok(v) => v,
            Err(e) => return Err(run.fail(e)),
        };
        if let Err(e) = run.record(n, &spec, next.view(), mu, None, false, note) {
            return Err(run.fail(e));
        }
        let done = run.converged(x.view(), next.view());
        x = next;
        if done {
            break;
        }
    }
    Ok(Solution { x, trace: run.trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::f_p_value;
    use crate::scalar_kernels::SmoothingKind;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(m: usize, n: usize, seed: u64) -> ProblemData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((m, n), |_| rng.gen_range(-1.0..1.0) / (m as f64).sqrt());
        let b = Array1::from_shape_fn(m, |_| rng.gen_range(-1.0..1.0));
        ProblemData::new(a, b).unwrap()
    }

    #[test]
    fn annealing_schedule_in_trace() {
        let prob = random_problem(8, 12, 1);
        let cfg = SolverConfig {
            sigma0: Some(0.5),
            max_iters: 20,
            ..SolverConfig::new(0.05 * prob.tau_max(), 1.0)
        };
        let sol = nonlinear_cg(&prob, &cfg, Array1::zeros(12).view()).unwrap();
        assert_eq!(sol.trace.len(), 20);
        for (n, rec) in sol.trace.records.iter().enumerate() {
            assert_eq!(rec.iteration, n);
            assert_eq!(rec.sigma, 0.5 * 0.8f64.powi(n as i32));
            assert!(rec.nonzeros <= 12);
        }
    }

    #[test]
    fn zero_solution_above_tau_max() {
        let prob = random_problem(10, 15, 2);
        let cfg = SolverConfig {
            threshold: Threshold::Optimality,
            max_iters: 10,
            ..SolverConfig::new(prob.tau_max() * 1.01, 1.0)
        };
        let sol = steepest_descent(&prob, &cfg, Array1::zeros(15).view()).unwrap();
        assert!(sol.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forced_zero_beta_matches_steepest_descent() {
        let prob = random_problem(12, 20, 3);
        let cfg = SolverConfig::new(0.1 * prob.tau_max(), 1.0).with_iters(25);
        let x0 = Array1::zeros(20);
        let sd = steepest_descent(&prob, &cfg, x0.view()).unwrap();
        let cg = nonlinear_cg_with(&prob, &cfg, x0.view(), BetaRule::Zero).unwrap();
        assert_eq!(sd.x, cg.x);
        for (a, b) in sd.trace.records.iter().zip(&cg.trace.records) {
            assert_eq!(a.step, b.step);
            assert_eq!(a.h_value, b.h_value);
        }
    }

    #[test]
    fn newton_is_exact_on_least_squares() {
        let prob = random_problem(9, 6, 4);
        // tiny tau: essentially the least-squares problem
        let cfg = SolverConfig {
            max_iters: 1,
            newton_inner_iters: 50,
            newton_tol: 1e-14,
            sigma0: Some(1.0),
            ..SolverConfig::new(1e-12, 1.0)
        };
        let sol = newton(&prob, &cfg, Array1::zeros(6).view()).unwrap();
        let normal = nalgebra::DMatrix::from_fn(6, 6, |i, j| prob.gram()[[i, j]]);
        let rhs = nalgebra::DVector::from_fn(6, |i, _| prob.atb()[i]);
        let ls = normal.lu().solve(&rhs).unwrap();
        for i in 0..6 {
            assert!((sol.x[i] - ls[i]).abs() < 1e-8, "{} vs {}", sol.x[i], ls[i]);
        }
    }

    #[test]
    fn newton_from_minimizer_stays_put() {
        let b = array![3.0, -2.0, 0.0, 0.0];
        let prob = ProblemData::new(Array2::eye(4), b.clone()).unwrap();
        let tau = 0.5;
        let cfg = SolverConfig {
            sigma0: Some(1e-6),
            max_iters: 3,
            ..SolverConfig::new(tau, 1.0)
        };
        // For tiny sigma the surrogate minimizer is b - tau sign(b); the
        // Newton correction there must vanish.
        let x0 = array![2.5, -1.5, 0.0, 0.0];
        let spec = cfg.objective(1e-6).unwrap();
        let g = crate::objectives::h_gradient(&prob, &spec, x0.view()).unwrap();
        assert!(norm2(g.view()) < 1e-6);
        let hess = h_hessian(&prob, &spec, x0.view()).unwrap();
        let inner = linear_cg(&hess, (-&g).view(), 15, 1e-12).unwrap();
        assert!(norm2(inner.solution.view()) < 1e-6);
        assert!(newton(&prob, &cfg, x0.view()).is_ok());
    }

    #[test]
    fn huber_kind_rejected_where_hessian_needed() {
        let prob = random_problem(5, 5, 5);
        let cfg = SolverConfig {
            kind: SmoothingKind::Huber,
            ..SolverConfig::new(0.1, 1.0)
        };
        assert!(steepest_descent(&prob, &cfg, Array1::zeros(5).view()).is_err());
        let bt = SolverConfig {
            line_search: cfg.line_search.with_method(LineSearchMethod::Backtracking),
            ..cfg
        };
        assert!(steepest_descent(&prob, &bt, Array1::zeros(5).view()).is_ok());
        assert!(newton(&prob, &bt, Array1::zeros(5).view()).is_err());
    }

    #[test]
    fn cg_decreases_f1_on_random_problem() {
        let prob = random_problem(30, 40, 6);
        let tau = 0.05 * prob.tau_max();
        let cfg = SolverConfig::new(tau, 1.0);
        let x0 = Array1::zeros(40);
        let start = f_p_value(&prob, x0.view(), 1.0, tau).unwrap();
        let sol = nonlinear_cg(&prob, &cfg, x0.view()).unwrap();
        let end = f_p_value(&prob, sol.x.view(), 1.0, tau).unwrap();
        assert!(end < start);
    }
}
