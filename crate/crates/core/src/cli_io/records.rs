//! CSV tables: path records, sweep tables and iteration traces.

use std::path::Path;

use crate::error::{Error, Result};
use crate::path_problems::{PathRecord, SweepRow};
use crate::solvers::{IterateRecord, StepNote};

pub const PATH_COLUMNS: [&str; 6] = [
    "tau",
    "residual_norm",
    "percent_error",
    "f1_value",
    "iterations",
    "wall_seconds",
];

pub const SWEEP_COLUMNS: [&str; 4] = ["nnz", "noise_fraction", "solver", "median_min_percent_error"];

pub const TRACE_COLUMNS: [&str; 10] = [
    "iteration",
    "sigma",
    "h_value",
    "f1_value",
    "residual_norm",
    "step",
    "nonzeros",
    "beta",
    "beta_clamped",
    "note",
];

/// Round-trip exact float rendering.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// A path record as stored on disk (the solution vector is not part of the table).
#[derive(Debug, Clone, PartialEq)]
pub struct PathRow {
    pub tau: f64,
    pub residual_norm: f64,
    pub percent_error: Option<f64>,
    pub f1_value: f64,
    pub iterations: usize,
    pub wall_seconds: f64,
}

impl From<&PathRecord> for PathRow {
    fn from(r: &PathRecord) -> Self {
        PathRow {
            tau: r.tau,
            residual_norm: r.residual_norm,
            percent_error: r.percent_error,
            f1_value: r.f1_value,
            iterations: r.iterations,
            wall_seconds: r.wall_seconds,
        }
    }
}

/// One line of a solver trace; fields that a method does not define are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub sigma: Option<f64>,
    pub h_value: Option<f64>,
    pub f1_value: f64,
    pub residual_norm: f64,
    pub step: Option<f64>,
    pub nonzeros: usize,
    pub beta: Option<f64>,
    pub beta_clamped: bool,
    pub note: String,
}

impl From<&IterateRecord> for TraceRow {
    fn from(r: &IterateRecord) -> Self {
        TraceRow {
            iteration: r.iteration,
            sigma: Some(r.sigma),
            h_value: Some(r.h_value),
            f1_value: r.f1_value,
            residual_norm: r.residual_norm,
            step: Some(r.step),
            nonzeros: r.nonzeros,
            beta: r.beta,
            beta_clamped: r.beta_clamped,
            note: match r.note {
                StepNote::Regular => "regular",
                StepNote::Fallback => "fallback",
                StepNote::Stalled => "stalled",
            }
            .to_string(),
        }
    }
}

fn csv_bytes<I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Numerical(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| Error::Numerical(format!("csv encoding failed: {e}")))
}

pub fn path_csv(records: &[PathRecord]) -> Result<Vec<u8>> {
    csv_bytes(
        &PATH_COLUMNS,
        records.iter().map(|r| {
            vec![
                fmt_f64(r.tau),
                fmt_f64(r.residual_norm),
                fmt_opt(r.percent_error),
                fmt_f64(r.f1_value),
                r.iterations.to_string(),
                fmt_f64(r.wall_seconds),
            ]
        }),
    )
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &SWEEP_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.nnz.to_string(),
                fmt_f64(r.noise_fraction),
                r.solver.clone(),
                fmt_opt(r.median_min_percent_error),
            ]
        }),
    )
}

pub fn trace_csv(rows: &[TraceRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &TRACE_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.iteration.to_string(),
                fmt_opt(r.sigma),
                fmt_opt(r.h_value),
                fmt_f64(r.f1_value),
                fmt_f64(r.residual_norm),
                fmt_opt(r.step),
                r.nonzeros.to_string(),
                fmt_opt(r.beta),
                r.beta_clamped.to_string(),
                r.note.clone(),
            ]
        }),
    )
}

pub fn write_path_records(path: impl AsRef<Path>, records: &[PathRecord]) -> Result<()> {
    super::write_atomic(path.as_ref(), &path_csv(records)?)
}

pub fn write_sweep(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    super::write_atomic(path.as_ref(), &sweep_csv(rows)?)
}

pub fn write_trace(path: impl AsRef<Path>, rows: &[TraceRow]) -> Result<()> {
    super::write_atomic(path.as_ref(), &trace_csv(rows)?)
}

struct Table<'a> {
    path: &'a Path,
    records: Vec<(usize, csv::StringRecord)>,
}

fn read_table<'a>(path: &'a Path, header: &[&str]) -> Result<Table<'a>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let found = r.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(parse_err(1, format!("expected columns {}", header.join(","))));
    }
    let mut records = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(k + 2, e.to_string()))?;
        records.push((k + 2, rec));
    }
    Ok(Table { path, records })
}

impl Table<'_> {
    fn field<T: std::str::FromStr>(&self, line: usize, rec: &csv::StringRecord, k: usize, name: &str) -> Result<T> {
        rec.get(k)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                path: self.path.to_path_buf(),
                line,
                message: format!("bad value for column '{name}'"),
            })
    }

    fn optional(&self, line: usize, rec: &csv::StringRecord, k: usize, name: &str) -> Result<Option<f64>> {
        match rec.get(k) {
            Some("") => Ok(None),
            _ => self.field(line, rec, k, name).map(Some),
        }
    }
}

pub fn read_path_records(path: impl AsRef<Path>) -> Result<Vec<PathRow>> {
    let t = read_table(path.as_ref(), &PATH_COLUMNS)?;
    t.records
        .iter()
        .map(|(line, rec)| {
            Ok(PathRow {
                tau: t.field(*line, rec, 0, "tau")?,
                residual_norm: t.field(*line, rec, 1, "residual_norm")?,
                percent_error: t.optional(*line, rec, 2, "percent_error")?,
                f1_value: t.field(*line, rec, 3, "f1_value")?,
                iterations: t.field(*line, rec, 4, "iterations")?,
                wall_seconds: t.field(*line, rec, 5, "wall_seconds")?,
            })
        })
        .collect()
}

pub fn read_sweep(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let t = read_table(path.as_ref(), &SWEEP_COLUMNS)?;
    t.records
        .iter()
        .map(|(line, rec)| {
            Ok(SweepRow {
                nnz: t.field(*line, rec, 0, "nnz")?,
                noise_fraction: t.field(*line, rec, 1, "noise_fraction")?,
                solver: t.field(*line, rec, 2, "solver")?,
                median_min_percent_error: t.optional(*line, rec, 3, "median_min_percent_error")?,
                error: None,
            })
        })
        .collect()
}
