//! Input parsing: dense distance CSV, points CSV, and a lower-triangle
//! text format for large symmetric tables.
//!
//! Dense CSV holds an n-by-n table; points CSV holds one coordinate vector
//! per row; lower-triangle holds row i on line i (i entries, i = 1..n-1),
//! the diagonal implicit. An optional non-numeric first line is treated as
//! a header. Parse failures carry 1-based line numbers.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error as CoreError;
use crate::matrix::{DistanceMatrix, Metric, DEFAULT_SYM_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// Square table with a zero diagonal is read as distances, anything
    /// else as points.
    Auto,
    DenseCsv,
    PointsCsv,
    LowerTriangle,
}

#[derive(Debug)]
pub enum IoError {
    Io(std::io::Error),
    Parse { line: usize, message: String },
    Matrix(CoreError),
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "{e}"),
            IoError::Parse { line, message } => write!(f, "line {line}: {message}"),
            IoError::Matrix(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<CoreError> for IoError {
    fn from(e: CoreError) -> Self {
        IoError::Matrix(e)
    }
}

fn split_row(line: &str) -> Vec<&str> {
    let sep = if line.contains(',') { ',' } else { ' ' };
    line.split(sep)
        .flat_map(|f| f.split_whitespace())
        .filter(|f| !f.is_empty())
        .collect()
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>, IoError> {
    split_row(line)
        .into_iter()
        .map(|f| {
            f.trim().parse::<f64>().map_err(|_| IoError::Parse {
                line: lineno,
                message: format!("cannot parse '{}' as a number", f.trim()),
            })
        })
        .collect()
}

/// Numeric rows of the file with their 1-based line numbers. A single
/// leading non-numeric line is accepted as a header.
fn numeric_rows(text: &str) -> Result<Vec<(usize, Vec<f64>)>, IoError> {
    let mut rows = Vec::new();
    let mut first_content_line = true;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        match parse_row(line, lineno) {
            Ok(row) => rows.push((lineno, row)),
            Err(e) => {
                if first_content_line {
                    first_content_line = false;
                    continue; // header row
                }
                return Err(e);
            }
        }
        first_content_line = false;
    }
    if rows.is_empty() {
        return Err(IoError::Parse {
            line: 1,
            message: "no numeric rows found".to_string(),
        });
    }
    Ok(rows)
}

pub fn load_matrix_str(
    text: &str,
    format: InputFormat,
    metric: Metric,
    sym_tol: f64,
) -> Result<DistanceMatrix, IoError> {
    let rows = numeric_rows(text)?;
    let format = match format {
        InputFormat::Auto => detect(&rows),
        f => f,
    };
    match format {
        InputFormat::DenseCsv => {
            let table: Vec<Vec<f64>> = rows.into_iter().map(|(_, r)| r).collect();
            Ok(DistanceMatrix::from_rows(table, sym_tol)?)
        }
        InputFormat::PointsCsv => {
            let points: Vec<Vec<f64>> = rows.into_iter().map(|(_, r)| r).collect();
            Ok(DistanceMatrix::from_points(&points, metric)?)
        }
        InputFormat::LowerTriangle => {
            let n = rows.len() + 1;
            let mut table = vec![vec![0.0; n]; n];
            for (t, (lineno, row)) in rows.into_iter().enumerate() {
                let i = t + 1;
                if row.len() != i {
                    return Err(IoError::Parse {
                        line: lineno,
                        message: format!(
                            "lower-triangle row {i} must have {i} entries, found {}",
                            row.len()
                        ),
                    });
                }
                for (j, d) in row.into_iter().enumerate() {
                    table[i][j] = d;
                    table[j][i] = d;
                }
            }
            Ok(DistanceMatrix::from_rows(table, sym_tol)?)
        }
        InputFormat::Auto => unreachable!("resolved above"),
    }
}

fn detect(rows: &[(usize, Vec<f64>)]) -> InputFormat {
    let n = rows.len();
    let square = rows.iter().all(|(_, r)| r.len() == n);
    if square {
        let zero_diag = rows.iter().enumerate().all(|(i, (_, r))| r[i] == 0.0);
        if zero_diag {
            return InputFormat::DenseCsv;
        }
    }
    InputFormat::PointsCsv
}

pub fn load_matrix(
    path: &Path,
    format: InputFormat,
    metric: Metric,
) -> Result<DistanceMatrix, IoError> {
    let text = std::fs::read_to_string(path).map_err(IoError::Io)?;
    load_matrix_str(&text, format, metric, DEFAULT_SYM_TOL)
}
