//! The exact functional `F_p(x) = ||Ax - b||^2 + 2 tau ||x||_p` and its smooth
//! surrogates `H_{p,sigma}`, with gradients and structured Hessians.

use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar_kernels::{self, check_sigma, SmoothingKind};

/// A dense least-squares problem `Ax ~ b` with `A^T A` and `A^T b` cached.
///
/// Immutable once built; derive a new value with [`ProblemData::with_rhs`]
/// to change `b`.
#[derive(Debug, Clone)]
pub struct ProblemData {
    a: Array2<f64>,
    b: Array1<f64>,
    gram: Array2<f64>,
    atb: Array1<f64>,
    truth: Option<Array1<f64>>,
    spectral_norm: OnceLock<f64>,
}

impl ProblemData {
    pub fn new(a: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        let (m, n) = a.dim();
        if m == 0 || n == 0 {
            return Err(Error::Domain(format!("matrix must be non-empty, got {m}x{n}")));
        }
        if b.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: b.len(),
                context: "right-hand side length",
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("problem data contains non-finite entries".into()));
        }
        let gram = symmetrized_gram(a.view());
        let atb = a.t().dot(&b);
        Ok(ProblemData {
            a,
            b,
            gram,
            atb,
            truth: None,
            spectral_norm: OnceLock::new(),
        })
    }

    /// Attach a ground-truth signal used for percent-error reporting.
    pub fn with_truth(mut self, truth: Array1<f64>) -> Result<Self> {
        self.check_len(truth.len(), "ground truth length")?;
        self.truth = Some(truth);
        Ok(self)
    }

    /// Same matrix (and cached Gram matrix), new right-hand side.
    pub fn with_rhs(&self, b: Array1<f64>) -> Result<Self> {
        if b.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.rows(),
                got: b.len(),
                context: "right-hand side length",
            });
        }
        let atb = self.a.t().dot(&b);
        Ok(ProblemData {
            a: self.a.clone(),
            b,
            gram: self.gram.clone(),
            atb,
            truth: self.truth.clone(),
            spectral_norm: self.spectral_norm.clone(),
        })
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    pub fn rhs(&self) -> ArrayView1<'_, f64> {
        self.b.view()
    }

    pub fn gram(&self) -> ArrayView2<'_, f64> {
        self.gram.view()
    }

    pub fn atb(&self) -> ArrayView1<'_, f64> {
        self.atb.view()
    }

    pub fn truth(&self) -> Option<ArrayView1<'_, f64>> {
        self.truth.as_ref().map(|t| t.view())
    }

    /// Estimate of `||A||_2`, computed on first use and cached.
    pub fn spectral_norm(&self) -> f64 {
        *self
            .spectral_norm
            .get_or_init(|| spectral_norm_estimate(self.gram.view()))
    }

    /// `||A^T b||_inf`, the smallest `tau` for which the l1 minimizer is zero.
    pub fn tau_max(&self) -> f64 {
        self.atb.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `Ax - b`.
    pub fn residual(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_len(x.len(), "iterate length")?;
        Ok(self.a.dot(&x) - &self.b)
    }

    pub fn residual_norm(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        Ok(norm2(self.residual(x)?.view()))
    }

    /// `2 A^T (Ax - b)`, computed through the cached Gram matrix.
    pub fn fit_gradient(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_len(x.len(), "iterate length")?;
        let mut g = self.gram.dot(&x);
        Zip::from(&mut g)
            .and(&self.atb)
            .for_each(|g, &c| *g = 2.0 * (*g - c));
        Ok(g)
    }

    pub(crate) fn check_len(&self, got: usize, context: &'static str) -> Result<()> {
        if got == self.cols() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.cols(),
                got,
                context,
            })
        }
    }
}

fn symmetrized_gram(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let g = a.t().dot(&a);
    let n = g.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (g[[i, j]] + g[[j, i]]))
}

const POWER_ITERATIONS: usize = 50;

/// `sqrt` of the largest eigenvalue of the Gram matrix `A^T A` from 50 power
/// iterations started at a fixed pseudo-random vector.
pub fn spectral_norm_estimate(gram: ArrayView2<'_, f64>) -> f64 {
    let n = gram.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Array1<f64> = Array1::from_shape_fn(n, |_| rng.sample(StandardNormal));
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let norm = norm2(v.view());
        if norm == 0.0 {
            return 0.0;
        }
        v /= norm;
        let w = gram.dot(&v);
        lambda = v.dot(&w);
        v = w;
    }
    f64::max(lambda, 0.0).sqrt()
}

pub(crate) fn norm2(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Parameters `(p, tau, sigma, kind)` of a surrogate `H_{p,sigma}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub p: f64,
    pub tau: f64,
    pub sigma: f64,
    pub kind: SmoothingKind,
}

impl ObjectiveSpec {
    pub fn new(p: f64, tau: f64, sigma: f64, kind: SmoothingKind) -> Result<Self> {
        let spec = ObjectiveSpec {
            p,
            tau,
            sigma,
            kind,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Domain(format!("p must lie in (0, 1], got {}", self.p)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Domain(format!("tau must be positive, got {}", self.tau)));
        }
        check_sigma(self.sigma)?;
        if self.p < 1.0 && self.kind != SmoothingKind::ConvPhi {
            return Err(Error::Unsupported(format!(
                "p = {} < 1 requires the conv-phi kind, got {}",
                self.p, self.kind
            )));
        }
        Ok(())
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        ObjectiveSpec { sigma, ..self }
    }
}

/// `||Ax - b||^2 + 2 tau (sum |x_k|^p)^(1/p)`.
pub fn f_p_value(prob: &ProblemData, x: ArrayView1<'_, f64>, p: f64, tau: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("p must be positive, got {p}")));
    }
    let r = prob.residual(x)?;
    let penalty = if p == 1.0 {
        x.iter().map(|v| v.abs()).sum::<f64>()
    } else {
        x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    };
    Ok(r.dot(&r) + 2.0 * tau * penalty)
}

/// `G_{p,sigma}(x) = (sum phi_sigma(x_k)^p)^(1/p)` with the conv-phi kind.
pub fn g_p_sigma(x: ArrayView1<'_, f64>, p: f64, sigma: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("p must be positive, got {p}")));
    }
    check_sigma(sigma)?;
    if p == 1.0 {
        return Ok(x
            .iter()
            .map(|&t| scalar_kernels::jet(SmoothingKind::ConvPhi, t, sigma).value)
            .sum());
    }
    let ln_phi: Vec<f64> = x
        .iter()
        .map(|&t| scalar_kernels::jet(SmoothingKind::ConvPhi, t, sigma).value.ln())
        .collect();
    Ok((log_sum_exp(ln_phi.iter().map(|l| p * l)) / p).exp())
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let peak = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return peak;
    }
    peak + terms.map(|t| (t - peak).exp()).sum::<f64>().ln()
}

/// Surrogate value `||Ax - b||^2 + 2 tau R_sigma(x)`.
pub fn h_value(prob: &ProblemData, spec: &ObjectiveSpec, x: ArrayView1<'_, f64>) -> Result<f64> {
    spec.validate()?;
    let r = prob.residual(x)?;
    Ok(r.dot(&r) + 2.0 * spec.tau * regularizer_value(spec, x))
}

fn regularizer_value(spec: &ObjectiveSpec, x: ArrayView1<'_, f64>) -> f64 {
    if spec.p == 1.0 {
        x.iter()
            .map(|&t| scalar_kernels::jet(spec.kind, t, spec.sigma).value)
            .sum()
    } else {
        let lp = LpTerms::new(spec, x);
        (lp.ln_sum / spec.p).exp()
    }
}

/// Per-component quantities of the `p < 1` regularizer, kept in log space.
struct LpTerms {
    ln_phi: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    /// `ln sum_k phi_k^p`.
    ln_sum: f64,
}

impl LpTerms {
    fn new(spec: &ObjectiveSpec, x: ArrayView1<'_, f64>) -> Self {
        let n = x.len();
        let mut ln_phi = Vec::with_capacity(n);
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for &t in x {
            let j = scalar_kernels::jet(SmoothingKind::ConvPhi, t, spec.sigma);
            ln_phi.push(j.value.ln());
            d1.push(j.d1);
            d2.push(j.d2.unwrap_or(0.0));
        }
        let ln_sum = log_sum_exp(ln_phi.iter().map(|l| spec.p * l));
        LpTerms {
            ln_phi,
            d1,
            d2,
            ln_sum,
        }
    }
}

/// Gradient of `2 tau R_sigma(x)` alone.
pub fn regularizer_gradient(spec: &ObjectiveSpec, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let two_tau = 2.0 * spec.tau;
    if spec.p == 1.0 {
        return x.mapv(|t| two_tau * scalar_kernels::jet(spec.kind, t, spec.sigma).d1);
    }
    let p = spec.p;
    let lp = LpTerms::new(spec, x);
    // G^(1-p) = exp((1-p)/p ln S)
    let ln_outer = (1.0 - p) / p * lp.ln_sum;
    Array1::from_shape_fn(x.len(), |j| {
        two_tau * (ln_outer + (p - 1.0) * lp.ln_phi[j]).exp() * lp.d1[j]
    })
}

/// Surrogate gradient given a precomputed `2 A^T (Ax - b)`.
pub fn gradient_with_fit(
    spec: &ObjectiveSpec,
    x: ArrayView1<'_, f64>,
    fit_gradient: ArrayView1<'_, f64>,
) -> Array1<f64> {
    let mut g = regularizer_gradient(spec, x);
    g += &fit_gradient;
    g
}

pub fn h_gradient(
    prob: &ProblemData,
    spec: &ObjectiveSpec,
    x: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    spec.validate()?;
    let fit = prob.fit_gradient(x)?;
    Ok(gradient_with_fit(spec, x, fit.view()))
}

/// `2 A^T A + Diag(diag) + weight * v v^T`, applied without materialization.
#[derive(Debug, Clone)]
pub struct HessianOperator<'a> {
    gram: ArrayView2<'a, f64>,
    diag: Array1<f64>,
    rank1: Option<(Array1<f64>, f64)>,
}

impl<'a> HessianOperator<'a> {
    pub fn new(
        gram: ArrayView2<'a, f64>,
        diag: Array1<f64>,
        rank1: Option<(Array1<f64>, f64)>,
    ) -> Self {
        HessianOperator { gram, diag, rank1 }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> ArrayView1<'_, f64> {
        self.diag.view()
    }

    pub fn rank1(&self) -> Option<(ArrayView1<'_, f64>, f64)> {
        self.rank1.as_ref().map(|(v, w)| (v.view(), *w))
    }

    pub fn apply(&self, u: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut out = self.gram.dot(&u);
        Zip::from(&mut out)
            .and(&self.diag)
            .and(&u)
            .for_each(|o, &d, &ui| *o = 2.0 * *o + d * ui);
        if let Some((v, weight)) = &self.rank1 {
            let scale = weight * v.dot(&u);
            out.scaled_add(scale, v);
        }
        out
    }

    /// `u^T H u`.
    pub fn quadratic_form(&self, u: ArrayView1<'_, f64>) -> f64 {
        self.apply(u).dot(&u)
    }
}

pub fn h_hessian<'a>(
    prob: &'a ProblemData,
    spec: &ObjectiveSpec,
    x: ArrayView1<'_, f64>,
) -> Result<HessianOperator<'a>> {
    spec.validate()?;
    if !spec.kind.has_second_derivative() {
        return Err(Error::Unsupported(format!(
            "the {} kind is not twice differentiable",
            spec.kind
        )));
    }
    prob.check_len(x.len(), "iterate length")?;
    let two_tau = 2.0 * spec.tau;
    if spec.p == 1.0 {
        let diag = x.mapv(|t| {
            two_tau
                * scalar_kernels::jet(spec.kind, t, spec.sigma)
                    .d2
                    .unwrap_or(0.0)
        });
        return Ok(HessianOperator::new(prob.gram(), diag, None));
    }
    let p = spec.p;
    let lp = LpTerms::new(spec, x);
    let ln_v_outer = (1.0 - 2.0 * p) / (2.0 * p) * lp.ln_sum;
    let ln_w_outer = (1.0 - p) / p * lp.ln_sum;
    let root = (1.0 - p).sqrt();
    let n = x.len();
    let v = Array1::from_shape_fn(n, |j| {
        root * (ln_v_outer + (p - 1.0) * lp.ln_phi[j]).exp() * lp.d1[j]
    });
    let diag = Array1::from_shape_fn(n, |j| {
        let curvature = (p - 1.0) * (ln_w_outer + (p - 2.0) * lp.ln_phi[j]).exp() * lp.d1[j]
            * lp.d1[j]
            + (ln_w_outer + (p - 1.0) * lp.ln_phi[j]).exp() * lp.d2[j];
        two_tau * curvature
    });
    Ok(HessianOperator::new(prob.gram(), diag, Some((v, two_tau))))
}
