//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_smooth::objectives::ProblemData;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `(2/sqrt(pi)) int_0^t exp(-s^2) ds`.
pub fn erf_oracle(t: f64) -> f64 {
    let g = |s: f64| 2.0 / PI.sqrt() * (-s * s).exp();
    adaptive_simpson(&g, 0.0, t, 1e-14)
}

pub fn gauss_density(s: f64, sigma: f64) -> f64 {
    (-(s * s) / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma).sqrt()
}

/// `int |t - s| K_sigma(s) ds`, split at the kink and truncated at 14 sigma.
pub fn convolution_oracle(t: f64, sigma: f64) -> f64 {
    let f = |s: f64| (t - s).abs() * gauss_density(s, sigma);
    let (lo, hi) = (-14.0 * sigma, 14.0 * sigma);
    if t <= lo || t >= hi {
        return adaptive_simpson(&f, lo, hi, 1e-13);
    }
    adaptive_simpson(&f, lo, t, 1e-13) + adaptive_simpson(&f, t, hi, 1e-13)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Problem with uniform(-1, 1) entries.
pub fn random_problem(m: usize, n: usize, seed: u64) -> ProblemData {
    let mut r = rng(seed);
    let a = Array2::from_shape_fn((m, n), |_| r.gen_range(-1.0..1.0));
    let b = Array1::from_shape_fn(m, |_| r.gen_range(-1.0..1.0));
    ProblemData::new(a, b).unwrap()
}

pub fn random_vector(n: usize, scale: f64, r: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| scale * r.gen_range(-1.0..1.0))
}

pub fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// `||a - b|| / max(||b||, floor)`.
pub fn rel_err(a: &Array1<f64>, b: &Array1<f64>, floor: f64) -> f64 {
    norm(&(a - b)) / norm(b).max(floor)
}

/// Central-difference gradient of `f` with per-component step `h max(1, |x_k|)`.
pub fn fd_gradient(f: &dyn Fn(&Array1<f64>) -> f64, x: &Array1<f64>, h: f64) -> Array1<f64> {
    let mut g = Array1::zeros(x.len());
    for k in 0..x.len() {
        let step = h * x[k].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += step;
        xm[k] -= step;
        g[k] = (f(&xp) - f(&xm)) / (2.0 * step);
    }
    g
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
