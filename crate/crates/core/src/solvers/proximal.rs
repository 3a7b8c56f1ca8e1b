use ndarray::{Array1, ArrayView1, Zip};

use super::check_start;
use crate::error::{Error, Result};
use crate::objectives::ProblemData;

const SAFETY: f64 = 1.01;

/// FISTA momentum schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Momentum {
    /// `t_1 = 1`, `t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`.
    Nesterov,
    /// `t_k = 1` for all k; the iteration reduces to ISTA.
    None,
}

/// Factor `c^2` applied to `A^T A`, `A^T b` and `tau` so that the unit-step
/// iteration sees an operator of norm at most one.
///
/// Operators whose estimated norm is already at most one are left alone;
/// otherwise `c = 1 / (1.01 * estimate)`.
pub fn operator_scale(prob: &ProblemData) -> f64 {
    let est = prob.spectral_norm();
    if est <= 1.0 + 1e-12 {
        1.0
    } else {
        let c = 1.0 / (SAFETY * est);
        c * c
    }
}

/// Soft-thresholded Landweber iteration `x <- S_tau(x + A^T b - A^T A x)`.
pub fn ista(prob: &ProblemData, tau: f64, max_iters: usize, x0: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    fista_with(prob, tau, max_iters, x0, Momentum::None)
}

/// Accelerated ISTA.
pub fn fista(prob: &ProblemData, tau: f64, max_iters: usize, x0: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    fista_with(prob, tau, max_iters, x0, Momentum::Nesterov)
}

pub fn fista_with(
    prob: &ProblemData,
    tau: f64,
    max_iters: usize,
    x0: ArrayView1<'_, f64>,
    momentum: Momentum,
) -> Result<Array1<f64>> {
    fista_observed(prob, tau, max_iters, x0, momentum, |_, _| {})
}

/// [`fista_with`], calling `observe(k, x_{k+1})` after every iteration.
pub fn fista_observed(
    prob: &ProblemData,
    tau: f64,
    max_iters: usize,
    x0: ArrayView1<'_, f64>,
    momentum: Momentum,
    mut observe: impl FnMut(usize, ArrayView1<'_, f64>),
) -> Result<Array1<f64>> {
    check_start(prob, x0)?;
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("tau must be non-negative, got {tau}")));
    }
    let scale = operator_scale(prob);
    let level = scale * tau;
    let gram = prob.gram();
    let atb = prob.atb();

    let mut x = x0.to_owned();
    let mut y = x.clone();
    let mut t = 1.0f64;
    for k in 0..max_iters {
        // z = y + c^2 (A^T b - A^T A y)
        let mut z = gram.dot(&y);
        Zip::from(&mut z)
            .and(&y)
            .and(atb)
            .for_each(|z, &y, &atb| *z = y + scale * (atb - *z));
        let next = z.mapv(|v| {
            if v > level {
                v - level
            } else if v < -level {
                v + level
            } else {
                0.0
            }
        });
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("iterate became non-finite at iteration {k}")));
        }
        y = match momentum {
            Momentum::None => next.clone(),
            Momentum::Nesterov => {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let w = (t - 1.0) / t_next;
                t = t_next;
                let mut y = &next - &x;
                y *= w;
                y += &next;
                y
            }
        };
        x = next;
        observe(k, x.view());
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::f_p_value;
    use crate::solvers::soft_threshold;
    use crate::objectives::spectral_norm_estimate;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_one_step() {
        let b = array![2.0, -0.3, 0.9, -1.7];
        let prob = ProblemData::new(Array2::eye(4), b.clone()).unwrap();
        let tau = 0.5;
        let expect = soft_threshold(b.view(), tau);
        let zero = Array1::zeros(4);
        assert_eq!(operator_scale(&prob), 1.0);
        assert_eq!(ista(&prob, tau, 1, zero.view()).unwrap(), expect);
        assert_eq!(fista(&prob, tau, 1, zero.view()).unwrap(), expect);
        // fixed point
        assert_eq!(ista(&prob, tau, 5, expect.view()).unwrap(), expect);
        assert_eq!(fista(&prob, tau, 5, expect.view()).unwrap(), expect);
    }

    #[test]
    fn constant_momentum_is_ista() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Array2::from_shape_fn((15, 20), |_| rng.gen_range(-1.0..1.0));
        let b = Array1::from_shape_fn(15, |_| rng.gen_range(-1.0..1.0));
        let prob = ProblemData::new(a, b).unwrap();
        let tau = 0.1 * prob.tau_max();
        let x0 = Array1::zeros(20);
        for iters in [1, 7, 30] {
            assert_eq!(
                fista_with(&prob, tau, iters, x0.view(), Momentum::None).unwrap(),
                ista(&prob, tau, iters, x0.view()).unwrap()
            );
        }
    }

    #[test]
    fn ista_monotone_in_f1() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = Array2::from_shape_fn((25, 30), |_| rng.gen_range(-2.0..2.0));
        let b = Array1::from_shape_fn(25, |_| rng.gen_range(-1.0..1.0));
        let prob = ProblemData::new(a, b).unwrap();
        let tau = 0.05 * prob.tau_max();
        let mut x = Array1::zeros(30);
        let mut prev = f_p_value(&prob, x.view(), 1.0, tau).unwrap();
        for _ in 0..60 {
            x = ista(&prob, tau, 1, x.view()).unwrap();
            let f = f_p_value(&prob, x.view(), 1.0, tau).unwrap();
            assert!(f <= prev * (1.0 + 1e-14), "{f} > {prev}");
            prev = f;
        }
    }

    #[test]
    fn spectral_estimate_of_diagonal() {
        let a = Array2::from_diag(&array![3.0, 1.0, 0.5]);
        let prob = ProblemData::new(a, Array1::ones(3)).unwrap();
        assert!((spectral_norm_estimate(prob.gram()) - 3.0).abs() < 1e-10);
        let c = 1.0 / (1.01 * spectral_norm_estimate(prob.gram()));
        assert_eq!(operator_scale(&prob), c * c);
    }
}
