//! Plain-text matrix files and JSON sidecars.
//!
//! Matrices are CSV, one row per line, with `NA` for a missing cell and an
//! optional first line `# rows=<m> cols=<n>`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, ObservationMatrix};

pub const MISSING_TOKEN: &str = "NA";

/// Parsed cells plus shape; `None` marks `NA`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixCells {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Option<f64>>,
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let body = line.strip_prefix('#')?.trim();
    let mut rows = None;
    let mut cols = None;
    for part in body.split_whitespace() {
        match part.split_once('=') {
            Some(("rows", v)) => rows = v.parse().ok(),
            Some(("cols", v)) => cols = v.parse().ok(),
            _ => {}
        }
    }
    Some((rows?, cols?))
}

pub fn parse_matrix_str(text: &str, path: &Path) -> Result<MatrixCells> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut declared = None;
    let mut cells = Vec::new();
    let mut rows = 0usize;
    let mut cols = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if rows == 0 && declared.is_none() {
                declared = parse_header(line);
            }
            continue;
        }
        let before = cells.len();
        for tok in line.split(',') {
            let tok = tok.trim();
            if tok == MISSING_TOKEN {
                cells.push(None);
            } else {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| err(lineno, format!("cannot parse {tok:?} as a number")))?;
                if !v.is_finite() {
                    return Err(err(lineno, format!("non-finite value {tok:?}")));
                }
                cells.push(Some(v));
            }
        }
        let width = cells.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(err(lineno, format!("expected {c} columns, found {width}")))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| err(1, "no matrix rows".into()))?;
    if let Some((m, n)) = declared {
        if (m, n) != (rows, cols) {
            return Err(err(
                1,
                format!("header declares {m}x{n} but body is {rows}x{cols}"),
            ));
        }
    }
    Ok(MatrixCells { rows, cols, cells })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_cells(path: impl AsRef<Path>) -> Result<MatrixCells> {
    let path = path.as_ref();
    parse_matrix_str(&read_text(path)?, path)
}

/// Reads a matrix with no missing cells.
pub fn read_dense(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let m = read_cells(path)?;
    let values = m
        .cells
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            c.ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: idx / m.cols + 1,
                message: format!("missing value at column {} in a dense matrix", idx % m.cols),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DenseMatrix::new(m.rows, m.cols, values)
}

pub fn read_observations(path: impl AsRef<Path>) -> Result<ObservationMatrix> {
    let m = read_cells(path)?;
    ObservationMatrix::from_cells(m.rows, m.cols, &m.cells)
}

pub fn format_cells(rows: usize, cols: usize, cells: &[Option<f64>]) -> String {
    let mut out = format!("# rows={rows} cols={cols}\n");
    for row in cells.chunks(cols) {
        let line: Vec<String> = row
            .iter()
            .map(|c| match c {
                // `{}` on f64 prints the shortest string that round-trips
                Some(v) => format!("{v}"),
                None => MISSING_TOKEN.to_string(),
            })
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_dense(path: impl AsRef<Path>, matrix: &DenseMatrix) -> Result<()> {
    let cells: Vec<Option<f64>> = matrix.as_slice().iter().copied().map(Some).collect();
    write_text(path, &format_cells(matrix.rows(), matrix.cols(), &cells))
}

pub fn write_observations(path: impl AsRef<Path>, obs: &ObservationMatrix) -> Result<()> {
    write_text(path, &format_cells(obs.rows(), obs.cols(), &obs.cells()))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    Ok(serde_json::from_str(&read_text(path)?)?)
}

/// `estimate.csv` → `estimate.json`.
pub fn sidecar_path(matrix_path: &Path) -> PathBuf {
    matrix_path.with_extension("json")
}
