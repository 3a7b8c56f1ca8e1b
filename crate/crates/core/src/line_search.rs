//! Step-size selection along a search direction.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::objectives::{norm2, HessianOperator};

/// Curvatures smaller than this in magnitude are treated as zero.
pub const CURVATURE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineSearchMethod {
    /// Armijo backtracking.
    Backtracking,
    /// Minimizer of the second-order Taylor model, `-g^T s / s^T H s`.
    TaylorHessian,
    /// Same model with `s^T H s` replaced by a central difference of gradients.
    SecantFd,
}

impl LineSearchMethod {
    pub fn name(self) -> &'static str {
        match self {
            LineSearchMethod::Backtracking => "backtracking",
            LineSearchMethod::TaylorHessian => "taylor-hessian",
            LineSearchMethod::SecantFd => "secant-fd",
        }
    }
}

impl fmt::Display for LineSearchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LineSearchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backtracking" => Ok(LineSearchMethod::Backtracking),
            "taylor-hessian" => Ok(LineSearchMethod::TaylorHessian),
            "secant-fd" => Ok(LineSearchMethod::SecantFd),
            other => Err(Error::InvalidConfig(format!(
                "unknown line search '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    pub method: LineSearchMethod,
    /// Initial trial step for backtracking.
    pub mu0: f64,
    /// Shrink factor for backtracking.
    pub rho: f64,
    /// Sufficient-decrease constant.
    pub c: f64,
    /// Finite-difference probe is `xi_scale * (1 + ||x||_2 / sqrt(n))`.
    pub xi_scale: f64,
    pub max_shrinks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            method: LineSearchMethod::TaylorHessian,
            mu0: 1.0,
            rho: 0.5,
            c: 1e-4,
            xi_scale: 1e-3,
            max_shrinks: 60,
        }
    }
}

impl LineSearchConfig {
    pub fn with_method(self, method: LineSearchMethod) -> Self {
        LineSearchConfig { method, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) || !self.mu0.is_finite() {
            return Err(Error::InvalidConfig(format!("mu0 must be positive, got {}", self.mu0)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!("rho must lie in (0,1), got {}", self.rho)));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::InvalidConfig(format!("c must lie in (0,1), got {}", self.c)));
        }
        if !(self.xi_scale > 0.0) || !self.xi_scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "xi_scale must be positive, got {}",
                self.xi_scale
            )));
        }
        Ok(())
    }
}

/// Outcome of [`backtracking`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backtrack {
    pub mu: f64,
    /// `false` when `max_shrinks` ran out before the Armijo test passed.
    pub accepted: bool,
    pub shrinks: usize,
}

/// Armijo backtracking: shrink `mu <- rho * mu` from `mu0` until
/// `f(x + mu s) <= f(x) + c mu grad^T s`.
pub fn backtracking(
    mut value_fn: impl FnMut(ArrayView1<'_, f64>) -> f64,
    grad: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
    s: ArrayView1<'_, f64>,
    cfg: &LineSearchConfig,
) -> Result<Backtrack> {
    let f0 = value_fn(x);
    if !f0.is_finite() {
        return Err(Error::Numerical(format!("objective is {f0} at the current iterate")));
    }
    let slope = grad.dot(&s);
    let mut mu = cfg.mu0;
    let mut trial = x.to_owned();
    for shrinks in 0..=cfg.max_shrinks {
        trial.assign(&x);
        trial.scaled_add(mu, &s);
        let f = value_fn(trial.view());
        if !f.is_finite() {
            return Err(Error::Numerical(format!(
                "objective is {f} at trial step {mu:e}"
            )));
        }
        if f <= f0 + cfg.c * mu * slope {
            return Ok(Backtrack {
                mu,
                accepted: true,
                shrinks,
            });
        }
        if shrinks == cfg.max_shrinks {
            break;
        }
        mu *= cfg.rho;
    }
    Ok(Backtrack {
        mu,
        accepted: false,
        shrinks: cfg.max_shrinks,
    })
}

/// Root of the linearized directional derivative: `-grad^T s / (s^T H s)`.
///
/// May be negative when the operator has negative curvature along `s`.
pub fn taylor_hessian_step(
    grad: ArrayView1<'_, f64>,
    hess: &HessianOperator<'_>,
    s: ArrayView1<'_, f64>,
) -> Result<f64> {
    let curvature = hess.quadratic_form(s);
    if !(curvature.abs() >= CURVATURE_FLOOR) {
        return Err(Error::DegenerateCurvature(curvature));
    }
    Ok(-grad.dot(&s) / curvature)
}

/// Gradient-only variant of [`taylor_hessian_step`] with the curvature
/// estimated by `(grad(x + xi s) - grad(x - xi s))^T s / (2 xi)`.
pub fn secant_fd_step(
    mut grad_fn: impl FnMut(ArrayView1<'_, f64>) -> Array1<f64>,
    x: ArrayView1<'_, f64>,
    s: ArrayView1<'_, f64>,
    xi: f64,
) -> Result<f64> {
    let g0 = grad_fn(x);
    secant_fd_step_from(g0.view(), grad_fn, x, s, xi)
}

/// [`secant_fd_step`] reusing an already computed gradient at `x`.
pub fn secant_fd_step_from(
    grad_at_x: ArrayView1<'_, f64>,
    mut grad_fn: impl FnMut(ArrayView1<'_, f64>) -> Array1<f64>,
    x: ArrayView1<'_, f64>,
    s: ArrayView1<'_, f64>,
    xi: f64,
) -> Result<f64> {
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::Domain(format!("probe width must be positive, got {xi}")));
    }
    let mut probe = x.to_owned();
    probe.scaled_add(xi, &s);
    let forward = grad_fn(probe.view()).dot(&s);
    probe.assign(&x);
    probe.scaled_add(-xi, &s);
    let backward = grad_fn(probe.view()).dot(&s);
    let denom = forward - backward;
    if !(denom.abs() >= CURVATURE_FLOOR) {
        return Err(Error::DegenerateCurvature(denom / (2.0 * xi)));
    }
    Ok(-2.0 * xi * grad_at_x.dot(&s) / denom)
}

/// Probe width `xi_scale * (1 + ||x||_2 / sqrt(n))`.
pub fn secant_probe(x: ArrayView1<'_, f64>, xi_scale: f64) -> f64 {
    let n = x.len().max(1) as f64;
    xi_scale * (1.0 + norm2(x) / n.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{h_gradient, h_hessian, ObjectiveSpec, ProblemData};
    use crate::scalar_kernels::SmoothingKind;
    use ndarray::{array, Array2};

    fn sq_norm(x: ArrayView1<'_, f64>) -> f64 {
        x.dot(&x)
    }

    #[test]
    fn armijo_hand_evaluation() {
        let x = array![1.0, 0.0];
        let grad = array![2.0, 0.0];
        let s = array![-2.0, 0.0];
        let cfg = LineSearchConfig::default();
        let out = backtracking(sq_norm, grad.view(), x.view(), s.view(), &cfg).unwrap();
        assert_eq!(out.mu, 0.5);
        assert!(out.accepted);
        assert_eq!(out.shrinks, 1);
    }

    #[test]
    fn flat_function_accepts_mu0() {
        let x = array![1.0, 2.0];
        let grad = array![0.0, 0.0];
        let s = array![1.0, -1.0];
        let cfg = LineSearchConfig {
            mu0: 3.0,
            ..LineSearchConfig::default()
        };
        let out = backtracking(|_| 7.0, grad.view(), x.view(), s.view(), &cfg).unwrap();
        assert_eq!((out.mu, out.accepted, out.shrinks), (3.0, true, 0));
    }

    #[test]
    fn ascent_direction_exhausts_shrinks() {
        let x = array![0.5];
        let grad = array![1.0];
        let s = array![1.0];
        let cfg = LineSearchConfig {
            max_shrinks: 12,
            ..LineSearchConfig::default()
        };
        let f = |v: ArrayView1<'_, f64>| v[0].exp();
        let out = backtracking(f, grad.view(), x.view(), s.view(), &cfg).unwrap();
        assert!(!out.accepted);
        assert_eq!(out.shrinks, 12);
        assert!(out.mu <= cfg.mu0);
    }

    #[test]
    fn backtracking_reports_non_finite() {
        let x = array![0.0];
        let grad = array![-1.0];
        let s = array![1.0];
        let f = |v: ArrayView1<'_, f64>| if v[0] > 0.0 { f64::NAN } else { 0.0 };
        let err = backtracking(f, grad.view(), x.view(), s.view(), &LineSearchConfig::default());
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    fn pure_quadratic() -> ProblemData {
        ProblemData::new(Array2::eye(2), array![0.0, 0.0]).unwrap()
    }

    #[test]
    fn taylor_step_exact_on_quadratic() {
        let prob = pure_quadratic();
        let hess = HessianOperator::new(prob.gram(), Array1::zeros(2), None);
        let x = array![1.0, 0.0];
        let g = prob.fit_gradient(x.view()).unwrap();
        let s = -&g;
        let mu = taylor_hessian_step(g.view(), &hess, s.view()).unwrap();
        assert_eq!(mu, 0.5);
        let next = &x + &(mu * &s);
        assert_eq!(next, array![0.0, 0.0]);

        let perp = array![0.0, 1.0];
        assert_eq!(taylor_hessian_step(g.view(), &hess, perp.view()).unwrap(), 0.0);
        let zero = Array1::zeros(2);
        assert!(matches!(
            taylor_hessian_step(g.view(), &hess, zero.view()),
            Err(Error::DegenerateCurvature(_))
        ));
    }

    #[test]
    fn secant_matches_taylor_on_quadratic() {
        let a = array![[2.0, 1.0, 0.0], [0.0, 1.0, -1.0], [1.0, 0.0, 3.0]];
        let prob = ProblemData::new(a, array![1.0, 2.0, 3.0]).unwrap();
        let hess = HessianOperator::new(prob.gram(), Array1::zeros(3), None);
        let x = array![0.3, -0.7, 1.1];
        let s = array![1.0, 0.5, -0.25];
        let g = prob.fit_gradient(x.view()).unwrap();
        let taylor = taylor_hessian_step(g.view(), &hess, s.view()).unwrap();
        for &xi in &[1e-4, 0.1, 3.0] {
            let secant = secant_fd_step(
                |v| prob.fit_gradient(v).unwrap(),
                x.view(),
                s.view(),
                xi,
            )
            .unwrap();
            assert!(((secant - taylor) / taylor).abs() < 1e-12, "{xi}: {secant} vs {taylor}");
        }
    }

    #[test]
    fn secant_degenerate_direction() {
        let prob = pure_quadratic();
        let x = array![1.0, 1.0];
        let zero = Array1::zeros(2);
        let res = secant_fd_step(|v| prob.fit_gradient(v).unwrap(), x.view(), zero.view(), 1e-3);
        assert!(matches!(res, Err(Error::DegenerateCurvature(_))));
        let s = array![1.0, 0.0];
        assert!(secant_fd_step(|v| prob.fit_gradient(v).unwrap(), x.view(), s.view(), 0.0).is_err());
    }

    #[test]
    fn hat_kind_can_have_negative_curvature() {
        // with x_k^2 > 2 sigma^2 the hat diagonal is negative; a tiny data term
        // lets it dominate along e_0
        let a = array![[1e-3, 0.0], [0.0, 1e-3]];
        let prob = ProblemData::new(a, array![0.0, 0.0]).unwrap();
        let sigma = 0.1;
        let spec = ObjectiveSpec::new(1.0, 1.0, sigma, SmoothingKind::ConvPhiHat).unwrap();
        let x = array![2.0 * sigma, 0.0];
        let hess = h_hessian(&prob, &spec, x.view()).unwrap();
        let s = array![1.0, 0.0];
        assert!(hess.quadratic_form(s.view()) < 0.0);
        let g = h_gradient(&prob, &spec, x.view()).unwrap();
        let mu = taylor_hessian_step(g.view(), &hess, (-&g).view()).unwrap();
        assert!(mu < 0.0);
    }

    #[test]
    fn probe_width_rule() {
        let zero = Array1::zeros(4);
        assert_eq!(secant_probe(zero.view(), 1e-3), 1e-3);
        let x = array![2.0, 2.0, 2.0, 2.0];
        assert!((secant_probe(x.view(), 1e-3) - 3e-3).abs() < 1e-18);
    }

    #[test]
    fn method_names() {
        for m in [
            LineSearchMethod::Backtracking,
            LineSearchMethod::TaylorHessian,
            LineSearchMethod::SecantFd,
        ] {
            assert_eq!(m.name().parse::<LineSearchMethod>().unwrap(), m);
        }
    }
}
