use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::objectives::ProblemData;

/// Sparsity-enforcing step applied after every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    Soft,
    Hard,
    /// Zero the components whose `|A^T (b - Ax)|_k <= tau`.
    Optimality,
}

impl Threshold {
    pub fn name(self) -> &'static str {
        match self {
            Threshold::Soft => "soft",
            Threshold::Hard => "hard",
            Threshold::Optimality => "optimality",
        }
    }

    /// Soft for `p = 1`, hard for `p < 1`.
    pub fn default_for(p: f64) -> Self {
        if p < 1.0 {
            Threshold::Hard
        } else {
            Threshold::Soft
        }
    }

    pub fn apply(self, prob: &ProblemData, x: ArrayView1<'_, f64>, tau: f64) -> Result<Array1<f64>> {
        match self {
            Threshold::Soft => Ok(soft_threshold(x, tau)),
            Threshold::Hard => Ok(hard_threshold(x, tau)),
            Threshold::Optimality => optimality_threshold(prob, x, tau),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(Threshold::Soft),
            "hard" => Ok(Threshold::Hard),
            "optimality" => Ok(Threshold::Optimality),
            other => Err(Error::InvalidConfig(format!("unknown threshold '{other}'"))),
        }
    }
}

/// `sign(x_k) max(0, |x_k| - tau)`.
pub fn soft_threshold(x: ArrayView1<'_, f64>, tau: f64) -> Array1<f64> {
    x.mapv(|v| {
        if v > tau {
            v - tau
        } else if v < -tau {
            v + tau
        } else {
            0.0
        }
    })
}

/// Keep `x_k` when `|x_k| > tau`, otherwise zero.
pub fn hard_threshold(x: ArrayView1<'_, f64>, tau: f64) -> Array1<f64> {
    x.mapv(|v| if v.abs() > tau { v } else { 0.0 })
}

pub fn optimality_threshold(
    prob: &ProblemData,
    x: ArrayView1<'_, f64>,
    tau: f64,
) -> Result<Array1<f64>> {
    prob.check_len(x.len(), "iterate length")?;
    // A^T (b - Ax) = A^T b - A^T A x
    let gx = prob.gram().dot(&x);
    let mut out = x.to_owned();
    Zip::from(&mut out)
        .and(&gx)
        .and(prob.atb())
        .for_each(|o, &gx, &atb| {
            if (atb - gx).abs() <= tau {
                *o = 0.0;
            }
        });
    Ok(out)
}
