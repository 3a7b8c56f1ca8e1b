use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::objectives::{norm2, ProblemData};

/// Test-matrix families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixKind {
    /// `U diag(s) V^T` with `s_k = exp(-decay (k-1) / (min(m,n)-1))`.
    TypeI { decay: f64 },
    /// Type I, then a `fraction` of the columns replaced by perturbed copies
    /// `c_r + eta ||c_r|| g` of retained columns (`g` a unit Gaussian vector).
    TypeII { decay: f64, fraction: f64, eta: f64 },
    /// Independent standard Cauchy entries.
    TypeIII,
}

impl MatrixKind {
    pub const fn type_i() -> Self {
        MatrixKind::TypeI { decay: 6.0 }
    }

    pub const fn type_ii() -> Self {
        MatrixKind::TypeII {
            decay: 6.0,
            fraction: 0.2,
            eta: 0.01,
        }
    }

    pub const fn type_iii() -> Self {
        MatrixKind::TypeIII
    }

    pub fn name(&self) -> &'static str {
        match self {
            MatrixKind::TypeI { .. } => "type-i",
            MatrixKind::TypeII { .. } => "type-ii",
            MatrixKind::TypeIII => "type-iii",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_decay = |decay: f64| {
            if decay > 0.0 && decay.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("decay rate must be positive, got {decay}")))
            }
        };
        match *self {
            MatrixKind::TypeI { decay } => check_decay(decay),
            MatrixKind::TypeII {
                decay,
                fraction,
                eta,
            } => {
                check_decay(decay)?;
                if !(fraction > 0.0 && fraction < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "correlated-column fraction must lie in (0,1), got {fraction}"
                    )));
                }
                if !(eta >= 0.0 && eta.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "correlation noise level must be non-negative, got {eta}"
                    )));
                }
                Ok(())
            }
            MatrixKind::TypeIII => Ok(()),
        }
    }
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MatrixKind {
    type Err = Error;

    /// Accepts `type-i`/`i`/`1` and the like; parameters take their defaults.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "type-i" | "i" | "1" => Ok(MatrixKind::type_i()),
            "type-ii" | "ii" | "2" => Ok(MatrixKind::type_ii()),
            "type-iii" | "iii" | "3" => Ok(MatrixKind::type_iii()),
            other => Err(Error::InvalidConfig(format!("unknown matrix kind '{other}'"))),
        }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // column-major fill, so the stream order matches nalgebra's storage
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn orthonormal_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, rows, cols).qr().q()
}

fn decaying_spectrum(m: usize, n: usize, decay: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let k = m.min(n);
    let u = orthonormal_columns(rng, m, k);
    let v = orthonormal_columns(rng, n, k);
    let denom = (k - 1).max(1) as f64;
    let mut us = u;
    for j in 0..k {
        let s = (-decay * j as f64 / denom).exp();
        us.column_mut(j).scale_mut(s);
    }
    let a = us * v.transpose();
    Array2::from_shape_fn((m, n), |(i, j)| a[(i, j)])
}

/// Deterministic test matrix of the given family.
pub fn gen_matrix(kind: MatrixKind, m: usize, n: usize, seed: u64) -> Result<Array2<f64>> {
    kind.validate()?;
    if m < 2 || n < 2 {
        return Err(Error::Domain(format!("matrix must be at least 2x2, got {m}x{n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        MatrixKind::TypeI { decay } => Ok(decaying_spectrum(m, n, decay, &mut rng)),
        MatrixKind::TypeII {
            decay,
            fraction,
            eta,
        } => {
            let mut a = decaying_spectrum(m, n, decay, &mut rng);
            let count = (fraction * n as f64).ceil() as usize;
            if count >= n {
                return Err(Error::InvalidConfig(format!(
                    "correlating {count} of {n} columns leaves none to copy from"
                )));
            }
            let mut overwrite = sample(&mut rng, n, count).into_vec();
            overwrite.sort_unstable();
            let mut is_overwritten = vec![false; n];
            for &j in &overwrite {
                is_overwritten[j] = true;
            }
            let retained: Vec<usize> = (0..n).filter(|&j| !is_overwritten[j]).collect();
            for &j in &overwrite {
                let r = retained[rng.gen_range(0..retained.len())];
                let base = a.column(r).to_owned();
                let g: Array1<f64> = Array1::from_shape_fn(m, |_| rng.sample(StandardNormal));
                let scale = eta * norm2(base.view()) / norm2(g.view());
                let mut col = a.column_mut(j);
                col.assign(&base);
                col.scaled_add(scale, &g);
            }
            Ok(a)
        }
        MatrixKind::TypeIII => Ok(Array2::from_shape_simple_fn((m, n), || {
            let num: f64 = rng.sample(StandardNormal);
            let den: f64 = rng.sample(StandardNormal);
            num / den
        })),
    }
}

/// Exactly `nnz` standard-Gaussian entries at uniformly random positions.
pub fn gen_sparse_signal(n: usize, nnz: usize, seed: u64) -> Result<Array1<f64>> {
    if nnz < 1 || nnz > n {
        return Err(Error::Domain(format!("need 1 <= nnz <= n, got nnz = {nnz}, n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array1::zeros(n);
    for k in sample(&mut rng, n, nnz).into_iter() {
        let mut v: f64 = 0.0;
        while v == 0.0 {
            v = rng.sample(StandardNormal);
        }
        x[k] = v;
    }
    Ok(x)
}

/// `v + e` with Gaussian `e` scaled to `||e|| = fraction ||v||`.
pub fn add_noise(v: &Array1<f64>, fraction: f64, seed: u64) -> Result<Array1<f64>> {
    if !(fraction >= 0.0 && fraction.is_finite()) {
        return Err(Error::Domain(format!("noise fraction must be non-negative, got {fraction}")));
    }
    if fraction == 0.0 {
        return Ok(v.clone());
    }
    let vnorm = norm2(v.view());
    if vnorm == 0.0 {
        return Err(Error::DegenerateProblem(
            "cannot scale noise relative to a zero vector".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: Array1<f64> = Array1::from_shape_fn(v.len(), |_| rng.sample(StandardNormal));
    let enorm = norm2(e.view());
    Ok(v + &(e * (fraction * vnorm / enorm)))
}

/// Where the noise of a synthetic problem enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// `b = Ax + e` with `||e|| = noise ||Ax||`.
    Measurement,
    /// `b = A (x + e)` with `||e|| = noise ||x||`.
    Signal,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::Measurement => "measurement",
            NoiseMode::Signal => "signal",
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "measurement" => Ok(NoiseMode::Measurement),
            "signal" => Ok(NoiseMode::Signal),
            other => Err(Error::InvalidConfig(format!("unknown noise mode '{other}'"))),
        }
    }
}

/// Recipe for a random sparse-recovery instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: MatrixKind,
    pub m: usize,
    pub n: usize,
    pub nnz: usize,
    pub noise: f64,
    pub noise_mode: NoiseMode,
}

/// A generated instance: the problem (carrying the clean signal as ground
/// truth) and the noise vector actually added.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub problem: ProblemData,
    pub noise: Array1<f64>,
}

impl Synthetic {
    /// `||b - A x_true||`, the residual level a well-chosen `tau` should reach.
    pub fn residual_noise_norm(&self) -> f64 {
        let truth = self.problem.truth().expect("synthetic problems carry ground truth");
        self.problem
            .residual_norm(truth)
            .expect("ground truth has matching length")
    }
}

/// Independent sub-seed for one random stream of a problem instance.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream)
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn build_problem(spec: &SyntheticSpec, seed: u64) -> Result<Synthetic> {
    let a = gen_matrix(spec.kind, spec.m, spec.n, derive_seed(seed, 1))?;
    let x = gen_sparse_signal(spec.n, spec.nnz, derive_seed(seed, 2))?;
    let noise_seed = derive_seed(seed, 3);
    problem_from_signal(a, x, spec.noise, spec.noise_mode, noise_seed)
}

/// Synthetic instance for a given matrix and clean signal.
pub fn problem_from_signal(
    a: Array2<f64>,
    x: Array1<f64>,
    noise: f64,
    mode: NoiseMode,
    seed: u64,
) -> Result<Synthetic> {
    if a.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            got: x.len(),
            context: "signal length",
        });
    }
    let clean = a.dot(&x);
    let (b, e) = match mode {
        NoiseMode::Measurement => {
            let b = add_noise(&clean, noise, seed)?;
            let e = &b - &clean;
            (b, e)
        }
        NoiseMode::Signal => {
            let noisy = add_noise(&x, noise, seed)?;
            let e = &noisy - &x;
            (a.dot(&noisy), e)
        }
    };
    let problem = ProblemData::new(a, b)?.with_truth(x)?;
    Ok(Synthetic { problem, noise: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names() {
        for k in [MatrixKind::type_i(), MatrixKind::type_ii(), MatrixKind::type_iii()] {
            assert_eq!(k.name().parse::<MatrixKind>().unwrap(), k);
        }
        assert!("iv".parse::<MatrixKind>().is_err());
        assert!(MatrixKind::TypeII {
            decay: 6.0,
            fraction: 1.0,
            eta: 0.01
        }
        .validate()
        .is_err());
        assert!(MatrixKind::TypeI { decay: 0.0 }.validate().is_err());
    }

    #[test]
    fn signal_examples() {
        let x = gen_sparse_signal(50, 7, 3).unwrap();
        assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 7);
        assert_eq!(x, gen_sparse_signal(50, 7, 3).unwrap());
        let dense = gen_sparse_signal(9, 9, 1).unwrap();
        assert!(dense.iter().all(|v| *v != 0.0));
        assert!(gen_sparse_signal(5, 0, 1).is_err());
        assert!(gen_sparse_signal(5, 6, 1).is_err());
    }

    #[test]
    fn noise_scaling() {
        let v = Array1::from_shape_fn(40, |k| (k as f64).sin() + 0.5);
        assert_eq!(add_noise(&v, 0.0, 1).unwrap(), v);
        let out = add_noise(&v, 0.25, 1).unwrap();
        let rel = norm2((&out - &v).view()) / norm2(v.view());
        assert!((rel - 0.25).abs() < 1e-12);
        assert!(matches!(
            add_noise(&Array1::zeros(3), 0.1, 1),
            Err(Error::DegenerateProblem(_))
        ));
        assert!(add_noise(&v, -0.1, 1).is_err());
    }

    #[test]
    fn noise_modes() {
        let spec = SyntheticSpec {
            kind: MatrixKind::type_i(),
            m: 20,
            n: 30,
            nnz: 4,
            noise: 0.1,
            noise_mode: NoiseMode::Measurement,
        };
        let s = build_problem(&spec, 5).unwrap();
        let truth = s.problem.truth().unwrap().to_owned();
        let clean = s.problem.matrix().dot(&truth);
        assert!((s.residual_noise_norm() / norm2(clean.view()) - 0.1).abs() < 1e-12);

        let s = build_problem(
            &SyntheticSpec {
                noise_mode: NoiseMode::Signal,
                ..spec
            },
            5,
        )
        .unwrap();
        let truth = s.problem.truth().unwrap().to_owned();
        assert!((norm2(s.noise.view()) / norm2(truth.view()) - 0.1).abs() < 1e-12);
    }
}
