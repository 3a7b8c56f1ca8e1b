//! Pointwise smooth approximations to `|t|`.
//!
//! The Gaussian-convolution family is built on
//!
//! ```text
//! phi_sigma(t) = t erf(t / (sqrt(2) sigma)) + sqrt(2/pi) sigma exp(-t^2 / (2 sigma^2)),
//! ```
//!
//! the convolution of `|.|` with the normal density of width `sigma`. Every
//! kind is evaluated through `a = |t| / sigma` so that values are exactly even
//! and first derivatives exactly odd in `t`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// `sqrt(2 / pi)`.
pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Smallest smoothing width accepted anywhere in the crate.
pub const SIGMA_MIN: f64 = 1e-12;

/// Beyond `|t| / sigma > FAR_TAIL` the Gaussian-convolution kinds collapse to `|t|`.
pub const FAR_TAIL: f64 = 8.0;

/// Which smooth approximation of `|t|` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmoothingKind {
    /// Gaussian convolution `phi_sigma`; strictly positive, convex.
    ConvPhi,
    /// `phi_sigma(t) - phi_sigma(0)`; zero at the origin, convex.
    ConvPhiShifted,
    /// `t erf(t / (sqrt(2) sigma))`; zero at the origin, not convex.
    ConvPhiHat,
    /// `phi_sigma(t) - sqrt(2/pi) sigma exp(-t^2)`.
    ConvPhiGaussShift,
    /// `sqrt(t^2 + sigma^2)`.
    SqrtEps,
    /// Huber function; once differentiable only.
    Huber,
}

impl SmoothingKind {
    pub const ALL: [SmoothingKind; 6] = [
        SmoothingKind::ConvPhi,
        SmoothingKind::ConvPhiShifted,
        SmoothingKind::ConvPhiHat,
        SmoothingKind::ConvPhiGaussShift,
        SmoothingKind::SqrtEps,
        SmoothingKind::Huber,
    ];

    pub fn has_second_derivative(self) -> bool {
        !matches!(self, SmoothingKind::Huber)
    }

    pub fn name(self) -> &'static str {
        match self {
            SmoothingKind::ConvPhi => "conv-phi",
            SmoothingKind::ConvPhiShifted => "conv-phi-shifted",
            SmoothingKind::ConvPhiHat => "conv-phi-hat",
            SmoothingKind::ConvPhiGaussShift => "conv-phi-gauss-shift",
            SmoothingKind::SqrtEps => "sqrt-eps",
            SmoothingKind::Huber => "huber",
        }
    }
}

impl fmt::Display for SmoothingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SmoothingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SmoothingKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown smoothing kind '{s}'")))
    }
}

/// Value and derivatives of a scalar approximation at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarJet {
    pub value: f64,
    pub d1: f64,
    /// Absent for [`SmoothingKind::Huber`].
    pub d2: Option<f64>,
}

/// The error function `2/sqrt(pi) * int_0^t exp(-s^2) ds`.
///
/// Backed by a full double precision rational approximation, well inside the
/// `1.5e-7` absolute error budget the solvers need.
pub fn erf(t: f64) -> f64 {
    libm::erf(t)
}

/// Normal density with standard deviation `sigma`, evaluated at `t`.
pub fn gauss_kernel(t: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let z = t / sigma;
    Ok((-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * sigma))
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= SIGMA_MIN {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "smoothing width must be finite and >= {SIGMA_MIN:e}, got {sigma:e}"
        )))
    }
}

/// Value, first and (where it exists) second derivative of the chosen
/// approximation to `|t|`.
pub fn smooth_abs(kind: SmoothingKind, t: f64, sigma: f64) -> Result<ScalarJet> {
    check_sigma(sigma)?;
    if !t.is_finite() {
        return Err(Error::Domain(format!("non-finite argument {t}")));
    }
    Ok(jet(kind, t, sigma))
}

/// Unchecked evaluation; callers validate `sigma` once per vector.
#[inline]
pub(crate) fn jet(kind: SmoothingKind, t: f64, sigma: f64) -> ScalarJet {
    let abs = t.abs();
    let sign = if t < 0.0 { -1.0 } else { 1.0 };
    match kind {
        SmoothingKind::ConvPhi => conv_phi(abs, sign, sigma),
        SmoothingKind::ConvPhiShifted => {
            let j = conv_phi(abs, sign, sigma);
            ScalarJet {
                value: j.value - SQRT_2_OVER_PI * sigma,
                ..j
            }
        }
        SmoothingKind::ConvPhiHat => {
            let a = abs / sigma;
            if a > FAR_TAIL {
                return ScalarJet {
                    value: abs,
                    d1: sign,
                    d2: Some(0.0),
                };
            }
            let e = (-0.5 * a * a).exp();
            let erf_a = erf(a * FRAC_1_SQRT_2);
            ScalarJet {
                value: abs * erf_a,
                d1: sign * (erf_a + a * SQRT_2_OVER_PI * e),
                d2: Some(SQRT_2_OVER_PI * e * (2.0 - a * a) / sigma),
            }
        }
        SmoothingKind::ConvPhiGaussShift => {
            let j = conv_phi(abs, sign, sigma);
            let c = SQRT_2_OVER_PI * sigma;
            let e = (-abs * abs).exp();
            ScalarJet {
                value: j.value - c * e,
                d1: j.d1 + sign * 2.0 * c * abs * e,
                d2: j.d2.map(|d2| d2 + c * (2.0 - 4.0 * abs * abs) * e),
            }
        }
        SmoothingKind::SqrtEps => {
            let r = abs.hypot(sigma);
            ScalarJet {
                value: r,
                d1: sign * abs / r,
                d2: Some(sigma * sigma / (r * r * r)),
            }
        }
        SmoothingKind::Huber => {
            if abs <= sigma {
                ScalarJet {
                    value: abs * abs / (2.0 * sigma),
                    d1: sign * abs / sigma,
                    d2: None,
                }
            } else {
                ScalarJet {
                    value: abs - 0.5 * sigma,
                    d1: sign,
                    d2: None,
                }
            }
        }
    }
}

#[inline]
fn conv_phi(abs: f64, sign: f64, sigma: f64) -> ScalarJet {
    let a = abs / sigma;
    if a > FAR_TAIL {
        return ScalarJet {
            value: abs,
            d1: sign,
            d2: Some(0.0),
        };
    }
    let e = (-0.5 * a * a).exp();
    let u = a * FRAC_1_SQRT_2;
    // phi - |t| = sigma * (sqrt(2/pi) e - a erfc(a / sqrt 2)) >= 0, written
    // through erfc so the excess does not cancel against |t|.
    let excess = sigma * (SQRT_2_OVER_PI * e - a * libm::erfc(u));
    ScalarJet {
        value: abs + excess,
        d1: sign * erf(u),
        d2: Some(SQRT_2_OVER_PI * e / sigma),
    }
}

/// Composite Simpson estimate of `int |approx(t) - |t|| dt` over
/// `[-halfwidth, halfwidth]`, using about `nodes` sample points.
///
/// Every kind is even, so the integral is taken over `[0, halfwidth]` and
/// doubled; this keeps the kink of `|t|` on a grid endpoint.
pub fn l1_distance_quadrature(
    kind: SmoothingKind,
    sigma: f64,
    halfwidth: f64,
    nodes: usize,
) -> Result<f64> {
    check_sigma(sigma)?;
    if !(halfwidth >= 10.0 * sigma) || !halfwidth.is_finite() {
        return Err(Error::Domain(format!(
            "halfwidth {halfwidth:e} must be at least 10 sigma = {:e}",
            10.0 * sigma
        )));
    }
    if nodes < 1000 {
        return Err(Error::Resolution(format!(
            "{nodes} quadrature nodes requested, at least 1000 required"
        )));
    }
    let mut intervals = (nodes - 1) / 2;
    if intervals % 2 == 1 {
        intervals += 1;
    }
    let h = halfwidth / intervals as f64;
    let gap = |t: f64| (jet(kind, t, sigma).value - t.abs()).abs();
    let mut acc = gap(0.0) + gap(halfwidth);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * gap(i as f64 * h);
    }
    Ok(2.0 * acc * h / 3.0)
}
