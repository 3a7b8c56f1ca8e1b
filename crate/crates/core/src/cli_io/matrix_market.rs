//! Dense MatrixMarket reader/writer (real `array` and `coordinate` formats).

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::write_atomic;
use crate::error::{Error, Result};

/// Refuse to materialize matrices larger than this many entries.
const MAX_ENTRIES: usize = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Array,
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

struct Reader<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// Next non-comment, non-blank line with its 1-based number.
    fn next_data(&mut self) -> Option<(usize, &'a str)> {
        self.lines
            .by_ref()
            .map(|(i, l)| (i + 1, l.trim()))
            .find(|(_, l)| !l.is_empty() && !l.starts_with('%'))
    }

    fn numbers<T: std::str::FromStr>(&self, line: usize, text: &str, count: usize) -> Result<Vec<T>> {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != count {
            return Err(self.err(line, format!("expected {count} fields, found {}", fields.len())));
        }
        fields
            .iter()
            .map(|f| {
                f.parse::<T>()
                    .map_err(|_| self.err(line, format!("cannot parse '{f}' as a number")))
            })
            .collect()
    }
}

fn parse_header(reader: &mut Reader<'_>) -> Result<(Format, Symmetry)> {
    let first = reader.lines.next().map(|(i, l)| (i + 1, l.trim()));
    let (line, text) = match first {
        Some(v) => v,
        None => return Err(reader.err(1, "empty file")),
    };
    let tokens: Vec<String> = text.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(reader.err(
            line,
            "malformed header: expected '%%MatrixMarket matrix <format> <field> <symmetry>'",
        ));
    }
    let format = match tokens[2].as_str() {
        "array" => Format::Array,
        "coordinate" => Format::Coordinate,
        other => return Err(reader.err(line, format!("unsupported format '{other}'"))),
    };
    match tokens[3].as_str() {
        "real" | "double" | "integer" => {}
        other => {
            return Err(reader.err(line, format!("unsupported field '{other}': only real values are accepted")))
        }
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(reader.err(line, format!("unsupported symmetry '{other}'"))),
    };
    Ok((format, symmetry))
}

/// Parse MatrixMarket text; `path` is only used in error messages.
pub fn parse_matrix(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut reader = Reader {
        path,
        lines: text.lines().enumerate(),
    };
    let (format, symmetry) = parse_header(&mut reader)?;
    let (size_line, size_text) = reader
        .next_data()
        .ok_or_else(|| reader.err(2, "missing size line"))?;
    let fields = if format == Format::Array { 2 } else { 3 };
    let size: Vec<usize> = reader.numbers(size_line, size_text, fields)?;
    let (m, n) = (size[0], size[1]);
    if m.checked_mul(n).map_or(true, |e| e > MAX_ENTRIES) {
        return Err(reader.err(size_line, format!("dimensions {m}x{n} are too large")));
    }
    if symmetry != Symmetry::General && m != n {
        return Err(reader.err(size_line, format!("{m}x{n} matrix cannot be symmetric")));
    }
    let mut a = Array2::zeros((m, n));
    let mirror = |a: &mut Array2<f64>, i: usize, j: usize, v: f64| {
        a[[i, j]] = v;
        if i != j {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => a[[j, i]] = v,
                Symmetry::SkewSymmetric => a[[j, i]] = -v,
            }
        }
    };
    match format {
        Format::Array => {
            // column-major; symmetric variants store the lower triangle only
            let mut slots = (0..n).flat_map(|j| (0..m).map(move |i| (i, j))).filter(|&(i, j)| match symmetry {
                Symmetry::General => true,
                Symmetry::Symmetric => i >= j,
                Symmetry::SkewSymmetric => i > j,
            });
            let mut last_line = size_line;
            while let Some((line, text)) = reader.next_data() {
                last_line = line;
                let v: f64 = reader.numbers(line, text, 1)?[0];
                let (i, j) = slots
                    .next()
                    .ok_or_else(|| reader.err(line, "more values than the declared dimensions"))?;
                mirror(&mut a, i, j, v);
            }
            if slots.next().is_some() {
                return Err(reader.err(last_line, "fewer values than the declared dimensions"));
            }
        }
        Format::Coordinate => {
            let nnz = size[2];
            let mut seen = 0usize;
            let mut last_line = size_line;
            while let Some((line, text)) = reader.next_data() {
                last_line = line;
                let fields: Vec<&str> = text.split_whitespace().collect();
                if fields.len() != 3 {
                    return Err(reader.err(line, format!("expected 3 fields, found {}", fields.len())));
                }
                let idx: Vec<usize> = reader.numbers(line, &fields[..2].join(" "), 2)?;
                let v: f64 = reader.numbers(line, fields[2], 1)?[0];
                let (i, j) = (idx[0], idx[1]);
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(reader.err(line, format!("entry ({i}, {j}) outside {m}x{n}")));
                }
                seen += 1;
                if seen > nnz {
                    return Err(reader.err(line, format!("more than the declared {nnz} entries")));
                }
                mirror(&mut a, i - 1, j - 1, v);
            }
            if seen != nnz {
                return Err(reader.err(last_line, format!("declared {nnz} entries, found {seen}")));
            }
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(reader.err(1, "matrix contains non-finite values"));
    }
    Ok(a)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

/// A vector stored as a single-column (or single-row) matrix.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Array1<f64>> {
    let path = path.as_ref();
    let a = read_matrix(path)?;
    match a.dim() {
        (_, 1) => Ok(a.column(0).to_owned()),
        (1, _) => Ok(a.row(0).to_owned()),
        (m, n) => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            message: format!("expected a vector, found a {m}x{n} matrix"),
        }),
    }
}

/// Render in `array real general` format, column-major, 17 significant digits.
pub fn format_matrix(a: ArrayView2<'_, f64>) -> String {
    let (m, n) = a.dim();
    let mut out = String::with_capacity(32 * (m * n + 2));
    out.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{m} {n}");
    for j in 0..n {
        for i in 0..m {
            let _ = writeln!(out, "{:.16e}", a[[i, j]]);
        }
    }
    out
}

pub fn write_matrix(path: impl AsRef<Path>, a: ArrayView2<'_, f64>) -> Result<()> {
    write_atomic(path.as_ref(), format_matrix(a).as_bytes())
}

pub fn write_vector(path: impl AsRef<Path>, v: ArrayView1<'_, f64>) -> Result<()> {
    write_matrix(path, v.insert_axis(ndarray::Axis(1)))
}
