//! Dense distance matrices.
//!
//! Distances are arbitrary finite reals: they need not satisfy the triangle
//! inequality, need not be symmetric, and may be negative (a negative
//! distance acts as an attraction). The only hard convention is a zero
//! diagonal. Every formula downstream reads `d(first, second)` exactly as
//! stated, so asymmetric tables behave predictably.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative symmetry tolerance (scaled by the largest |entry|).
pub const DEFAULT_SYM_TOL: f64 = 1e-9;

/// Metric used when deriving a matrix from coordinate vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    SquaredEuclidean,
    Manhattan,
}

impl Metric {
    fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let d = x - y;
                match self {
                    Metric::Manhattan => d.abs(),
                    _ => d * d,
                }
            })
            .sum();
        match self {
            Metric::Euclidean => sq.sqrt(),
            _ => sq,
        }
    }
}

/// An n-by-n table of pairwise distances with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
    symmetric: bool,
    min_entry: f64,
}

impl DistanceMatrix {
    /// Validates and wraps a full table of rows.
    ///
    /// `sym_tol` is relative to the largest absolute entry; the matrix is
    /// accepted either way, with `is_symmetric` recording the outcome.
    /// Diagonal entries must be exactly zero.
    pub fn from_rows(rows: Vec<Vec<f64>>, sym_tol: f64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NonSquare {
                    row: i,
                    got: row.len(),
                    expected: n,
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteEntry { i, j });
                }
                if i == j && v != 0.0 {
                    return Err(Error::NonZeroDiagonal(i));
                }
                data.push(v);
            }
        }
        let max_abs = data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let threshold = sym_tol * max_abs;
        let mut symmetric = true;
        'outer: for i in 0..n {
            for j in (i + 1)..n {
                if (data[i * n + j] - data[j * n + i]).abs() > threshold {
                    symmetric = false;
                    break 'outer;
                }
            }
        }
        let min_entry = data.iter().fold(f64::INFINITY, |acc, &v| acc.min(v));
        Ok(Self {
            n,
            data,
            symmetric,
            min_entry,
        })
    }

    /// Builds a matrix from coordinate vectors under the chosen metric.
    /// Symmetric by construction.
    pub fn from_points(points: &[Vec<f64>], metric: Metric) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                index: 0,
                got: 0,
                expected: 1,
            });
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    index: i,
                    got: p.len(),
                    expected: dim,
                });
            }
        }
        let mut data = vec![0.0; n * n];
        let mut min_entry = if n > 1 { f64::INFINITY } else { 0.0 };
        for i in 0..n {
            for j in (i + 1)..n {
                let d = metric.eval(&points[i], &points[j]);
                data[i * n + j] = d;
                data[j * n + i] = d;
                min_entry = min_entry.min(d);
            }
        }
        Ok(Self {
            n,
            data,
            symmetric: true,
            min_entry: min_entry.min(0.0),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// d(i, j)
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Smallest entry in the table (0 for a 1-point matrix).
    pub fn min_entry(&self) -> f64 {
        self.min_entry
    }

    /// Replaces each off-diagonal entry `d` by `d^(p+1)`, the weighting
    /// `w(D) = D^p` applied multiplicatively. Requires non-negative entries;
    /// the transform is monotone, so every per-row ordering is preserved.
    pub fn apply_weight(&self, p: f64) -> Result<Self> {
        if p < 0.0 || !p.is_finite() {
            return Err(Error::NegativeWeightExponent(p));
        }
        if self.min_entry < 0.0 {
            let (i, j) = self.find_negative();
            return Err(Error::NegativeEntryWithWeighting { i, j });
        }
        if p == 0.0 {
            return Ok(self.clone());
        }
        let data: Vec<f64> = self.data.iter().map(|&d| d.powf(p + 1.0)).collect();
        let min_entry = data.iter().fold(f64::INFINITY, |acc, &v| acc.min(v));
        Ok(Self {
            n: self.n,
            data,
            symmetric: self.symmetric,
            min_entry,
        })
    }

    fn find_negative(&self) -> (usize, usize) {
        for i in 0..self.n {
            for j in 0..self.n {
                if self.at(i, j) < 0.0 {
                    return (i, j);
                }
            }
        }
        unreachable!("min_entry < 0 implies a negative entry exists")
    }
}
