use rayon::prelude::*;

use super::generators::{build_problem, splitmix64, MatrixKind, NoiseMode, SyntheticSpec};
use super::{min_percent_error, run_path, tau_grid, PathMethod};
use crate::error::{Error, Result};

/// Grid of (nnz, noise) cells, each solved `trials` times by every method.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub kind: MatrixKind,
    pub m: usize,
    pub n: usize,
    pub nnz_grid: Vec<usize>,
    pub noise_grid: Vec<f64>,
    pub noise_mode: NoiseMode,
    pub methods: Vec<PathMethod>,
    pub trials: usize,
    pub seed: u64,
    pub tau_points: usize,
    pub tau_start_div: f64,
    pub tau_end_div: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub nnz: usize,
    pub noise_fraction: f64,
    pub solver: String,
    /// Median over trials of the smallest percent error along the path;
    /// `None` when any trial of this cell failed.
    pub median_min_percent_error: Option<f64>,
    pub error: Option<String>,
}

/// Seed of one trial in one cell; independent of evaluation order.
pub fn trial_seed(master: u64, cell: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ cell as u64) ^ trial as u64)
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if self.nnz_grid.is_empty() || self.noise_grid.is_empty() {
            return Err(Error::InvalidConfig("sweep grids must be non-empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("sweep needs at least one trial".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one solver".into()));
        }
        self.kind.validate()?;
        for m in &self.methods {
            // tau is set per grid point; validate everything else
            m.config.with_tau(1.0).validate()?;
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(usize, f64)> {
        self.nnz_grid
            .iter()
            .flat_map(|&nnz| self.noise_grid.iter().map(move |&noise| (nnz, noise)))
            .collect()
    }

    /// Min-over-tau percent error of every method on one trial.
    fn trial(&self, nnz: usize, noise: f64, seed: u64) -> Vec<std::result::Result<f64, String>> {
        let synthetic = SyntheticSpec {
            kind: self.kind,
            m: self.m,
            n: self.n,
            nnz,
            noise,
            noise_mode: self.noise_mode,
        };
        let prob = match build_problem(&synthetic, seed).map(|s| s.problem).and_then(|p| {
            let grid = tau_grid(&p, self.tau_points, self.tau_start_div, self.tau_end_div)?;
            Ok((p, grid))
        }) {
            Ok(v) => v,
            Err(e) => return vec![Err(e.to_string()); self.methods.len()],
        };
        let (prob, grid) = prob;
        self.methods
            .iter()
            .map(|m| {
                run_path(&prob, m.solver, &m.config, &grid)
                    .map_err(|e| e.to_string())
                    .and_then(|recs| {
                        min_percent_error(&recs).ok_or_else(|| "no ground truth".to_string())
                    })
            })
            .collect()
    }
}

/// Median min-over-tau percent error per (nnz, noise, method).
///
/// Rows are ordered by nnz, then noise, then method. Trials run in
/// parallel; every trial's seed depends only on `(seed, cell, trial)`.
/// A failing trial marks its cell/method entry but does not stop the sweep.
pub fn sweep_contours(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials).map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (nnz, noise) = cells[c];
            spec.trial(nnz, noise, trial_seed(spec.seed, c, t))
        })
        .collect();

    let mut rows = Vec::with_capacity(cells.len() * spec.methods.len());
    for (c, &(nnz, noise)) in cells.iter().enumerate() {
        let trials = &outcomes[c * spec.trials..(c + 1) * spec.trials];
        for (k, method) in spec.methods.iter().enumerate() {
            let mut values = Vec::with_capacity(spec.trials);
            let mut error = None;
            for outcome in trials {
                match &outcome[k] {
                    Ok(v) => values.push(*v),
                    Err(e) => {
                        error.get_or_insert_with(|| e.clone());
                    }
                }
            }
            rows.push(SweepRow {
                nnz,
                noise_fraction: noise,
                solver: method.label.clone(),
                median_min_percent_error: if error.is_none() { median(&values) } else { None },
                error,
            });
        }
    }
    Ok(rows)
}
