//! Sorted-neighbor preprocessing.
//!
//! For each point i the n-1 other points are arranged by ascending d(i, j),
//! ties broken by ascending index. The ordering is computed once and shared
//! by every start method and every k; it is the O(n^2 log n) part of the
//! intensity-based pipeline. Integer-valued rows with a narrow range take an
//! O(n) counting-sort path instead.

use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;

/// Widest integer row range (as a multiple of n) still bucket-sorted.
const BUCKET_RANGE_FACTOR: usize = 8;

/// Per-point ascending orderings of all other points.
#[derive(Clone, Debug)]
pub struct NeighborOrder {
    n: usize,
    order: Vec<u32>, // n rows of n-1 neighbor indices each
}

impl NeighborOrder {
    pub fn build(m: &DistanceMatrix) -> Result<Self> {
        let n = m.n();
        if n < 2 {
            return Err(Error::TooFewPoints(n));
        }
        let mut order = Vec::with_capacity(n * (n - 1));
        let mut scratch: Vec<u32> = Vec::with_capacity(n - 1);
        for i in 0..n {
            scratch.clear();
            if !bucket_sort_row(m.row(i), i, &mut scratch) {
                scratch.extend((0..n as u32).filter(|&j| j as usize != i));
                let row = m.row(i);
                scratch.sort_by(|&a, &b| row[a as usize].total_cmp(&row[b as usize]));
            }
            order.extend_from_slice(&scratch);
        }
        Ok(Self { n, order })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Neighbors of i, nearest first.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.order[i * (self.n - 1)..(i + 1) * (self.n - 1)]
    }
}

/// Counting sort for integer rows with O(n) value range. Returns false when
/// the row does not qualify, leaving `out` untouched.
fn bucket_sort_row(row: &[f64], skip: usize, out: &mut Vec<u32>) -> bool {
    let n = row.len();
    if n < 2 {
        return false;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (j, &d) in row.iter().enumerate() {
        if j == skip {
            continue;
        }
        if d.fract() != 0.0 || d.abs() > 2f64.powi(40) {
            return false;
        }
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let range = (hi - lo) as usize;
    if range > BUCKET_RANGE_FACTOR * n {
        return false;
    }
    let mut counts = vec![0u32; range + 1];
    for (j, &d) in row.iter().enumerate() {
        if j != skip {
            counts[(d - lo) as usize] += 1;
        }
    }
    let mut offsets = vec![0u32; range + 1];
    let mut acc = 0;
    for (o, c) in offsets.iter_mut().zip(&counts) {
        *o = acc;
        acc += c;
    }
    out.resize(n - 1, 0);
    // Ascending j keeps the lowest-index tie-break.
    for (j, &d) in row.iter().enumerate() {
        if j != skip {
            let slot = (d - lo) as usize;
            out[offsets[slot] as usize] = j as u32;
            offsets[slot] += 1;
        }
    }
    true
}
