//! Separation measures and pseudo-centroid extraction.
//!
//! A pseudo-centroid of a cluster C is a member minimizing a separation
//! measure over C; the minimized value is the cluster's span. Two measures
//! are implemented: MinMax (largest distance to a co-member) and MinSum
//! (sum of distances to co-members, optionally weighted by pre-transforming
//! the matrix with `d^(p+1)`).

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    MinMax,
    MinSum,
}

/// A separation measure plus the MinSum weight exponent (0 = unweighted).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationMeasure {
    pub kind: MeasureKind,
    pub weight_exponent: f64,
}

impl SeparationMeasure {
    pub fn min_max() -> Self {
        Self {
            kind: MeasureKind::MinMax,
            weight_exponent: 0.0,
        }
    }

    pub fn min_sum() -> Self {
        Self {
            kind: MeasureKind::MinSum,
            weight_exponent: 0.0,
        }
    }

    pub fn weighted_min_sum(p: f64) -> Result<Self> {
        if p < 0.0 || !p.is_finite() {
            return Err(Error::NegativeWeightExponent(p));
        }
        Ok(Self {
            kind: MeasureKind::MinSum,
            weight_exponent: p,
        })
    }

    /// Applies the weight exponent to the matrix once, up front. All
    /// downstream evaluation then uses the plain measure on the result.
    pub fn prepare<'a>(&self, m: &'a DistanceMatrix) -> Result<Cow<'a, DistanceMatrix>> {
        if self.weight_exponent == 0.0 {
            Ok(Cow::Borrowed(m))
        } else {
            Ok(Cow::Owned(m.apply_weight(self.weight_exponent)?))
        }
    }
}

/// Separate(i: C): MaxDist or SumDist of i over C \ {i}. A singleton
/// cluster separates to 0, consistent with the zero diagonal.
pub fn separate(kind: MeasureKind, i: usize, cluster: &[usize], m: &DistanceMatrix) -> Result<f64> {
    if !cluster.contains(&i) {
        return Err(Error::PointNotInCluster(i));
    }
    Ok(separate_unchecked(kind, i, cluster, m))
}

#[inline]
pub(crate) fn separate_unchecked(
    kind: MeasureKind,
    i: usize,
    cluster: &[usize],
    m: &DistanceMatrix,
) -> f64 {
    match kind {
        MeasureKind::MinMax => {
            let mut max = f64::NEG_INFINITY;
            let mut seen = false;
            for &j in cluster {
                if j != i {
                    seen = true;
                    max = max.max(m.at(i, j));
                }
            }
            if seen {
                max
            } else {
                0.0
            }
        }
        MeasureKind::MinSum => cluster
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| m.at(i, j))
            .sum(),
    }
}

/// The pseudo-centroid of a cluster: the lowest-index minimizer, the full
/// set of minimizers, and the span they achieve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentroidResult {
    pub centroid: usize,
    pub span: f64,
    pub all_centroids: Vec<usize>,
}

pub fn pseudo_centroid(
    kind: MeasureKind,
    cluster: &[usize],
    m: &DistanceMatrix,
) -> Result<CentroidResult> {
    if cluster.is_empty() {
        return Err(Error::EmptyCluster);
    }
    // Evaluate members in ascending index order so sums (and therefore ties)
    // do not depend on the caller's member ordering.
    let mut members: Vec<usize> = cluster.to_vec();
    members.sort_unstable();
    let mut span = f64::INFINITY;
    let mut all = Vec::new();
    for &i in &members {
        let v = separate_unchecked(kind, i, &members, m);
        if v < span {
            span = v;
            all.clear();
            all.push(i);
        } else if v == span {
            all.push(i);
        }
    }
    Ok(CentroidResult {
        centroid: all[0],
        span,
        all_centroids: all,
    })
}

/// MinSum-centroid of `cluster` under exact integer weighting d^(p+1).
/// Returns the lowest-index minimizer and the full minimizer set. Supports
/// the lexicographic limit check (large p makes MinSum collapse onto
/// MinMax) without floating-point overflow.
pub fn exact_weighted_minsum_centroids(
    rows: &[Vec<u64>],
    cluster: &[usize],
    p: u32,
) -> Result<(usize, Vec<usize>)> {
    if cluster.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut members: Vec<usize> = cluster.to_vec();
    members.sort_unstable();
    let mut best: Option<BigUint> = None;
    let mut all = Vec::new();
    for &i in &members {
        let mut sum = BigUint::ZERO;
        for &j in &members {
            if j != i {
                sum += BigUint::from(rows[i][j]).pow(p + 1);
            }
        }
        match &best {
            Some(b) if sum > *b => {}
            Some(b) if sum == *b => all.push(i),
            _ => {
                best = Some(sum);
                all = vec![i];
            }
        }
    }
    Ok((all[0], all))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Metric;

    fn m4() -> DistanceMatrix {
        DistanceMatrix::from_points(
            &[vec![0.0], vec![1.0], vec![3.0], vec![7.0]],
            Metric::Euclidean,
        )
        .unwrap()
    }

    // Row-scan oracle used to freeze the expected values below.
    fn oracle_separate(kind: MeasureKind, i: usize, c: &[usize], m: &DistanceMatrix) -> f64 {
        let ds: Vec<f64> = c.iter().filter(|&&j| j != i).map(|&j| m.at(i, j)).collect();
        match kind {
            MeasureKind::MinMax => ds.iter().fold(0.0, |a: f64, &b| a.max(b)),
            MeasureKind::MinSum => ds.iter().sum(),
        }
    }

    #[test]
    fn minmax_separate_on_m4() {
        let m = m4();
        let c = [0, 1, 2, 3];
        assert_eq!(oracle_separate(MeasureKind::MinMax, 2, &c, &m), 4.0);
        assert_eq!(separate(MeasureKind::MinMax, 2, &c, &m).unwrap(), 4.0);
    }

    #[test]
    fn minsum_separate_on_m4() {
        let m = m4();
        let c = [0, 1, 2, 3];
        assert_eq!(oracle_separate(MeasureKind::MinSum, 1, &c, &m), 9.0);
        assert_eq!(separate(MeasureKind::MinSum, 1, &c, &m).unwrap(), 9.0);
    }

    #[test]
    fn singleton_separates_to_zero() {
        let m = m4();
        assert_eq!(separate(MeasureKind::MinMax, 2, &[2], &m).unwrap(), 0.0);
        assert_eq!(separate(MeasureKind::MinSum, 2, &[2], &m).unwrap(), 0.0);
    }

    #[test]
    fn separate_requires_membership() {
        let m = m4();
        assert!(matches!(
            separate(MeasureKind::MinMax, 0, &[1, 2], &m).unwrap_err(),
            Error::PointNotInCluster(0)
        ));
    }

    #[test]
    fn minmax_centroid_of_m4() {
        // Exhaustive Separate evaluation: MaxDist = 7, 6, 4, 7.
        let r = pseudo_centroid(MeasureKind::MinMax, &[0, 1, 2, 3], &m4()).unwrap();
        assert_eq!(r.centroid, 2);
        assert_eq!(r.span, 4.0);
        assert_eq!(r.all_centroids, vec![2]);
    }

    #[test]
    fn minsum_centroid_of_m4_ties() {
        // Row sums: 11, 9, 9, 17 -> centroids {1, 2}.
        let r = pseudo_centroid(MeasureKind::MinSum, &[0, 1, 2, 3], &m4()).unwrap();
        assert_eq!(r.centroid, 1);
        assert_eq!(r.span, 9.0);
        assert_eq!(r.all_centroids, vec![1, 2]);
    }

    #[test]
    fn singleton_centroid() {
        let points: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let m = DistanceMatrix::from_points(&points, Metric::Euclidean).unwrap();
        let r = pseudo_centroid(MeasureKind::MinMax, &[5], &m).unwrap();
        assert_eq!((r.centroid, r.span), (5, 0.0));
        assert_eq!(r.all_centroids, vec![5]);
    }

    #[test]
    fn empty_cluster_rejected() {
        assert!(matches!(
            pseudo_centroid(MeasureKind::MinMax, &[], &m4()).unwrap_err(),
            Error::EmptyCluster
        ));
    }

    #[test]
    fn pair_cluster_spans_the_distance() {
        let m = m4();
        let r = pseudo_centroid(MeasureKind::MinMax, &[1, 3], &m).unwrap();
        assert_eq!(r.span, m.at(1, 3));
        assert_eq!(r.all_centroids, vec![1, 3]);
    }

    #[test]
    fn span_is_minimal_over_members() {
        let m = m4();
        for kind in [MeasureKind::MinMax, MeasureKind::MinSum] {
            for c in [vec![0, 1], vec![0, 2, 3], vec![0, 1, 2, 3]] {
                let r = pseudo_centroid(kind, &c, &m).unwrap();
                for &i in &c {
                    assert!(r.span <= separate(kind, i, &c, &m).unwrap());
                }
            }
        }
    }

    #[test]
    fn exact_weighting_matches_float_for_small_p() {
        let rows: Vec<Vec<u64>> = vec![
            vec![0, 1, 3, 7],
            vec![1, 0, 2, 6],
            vec![3, 2, 0, 4],
            vec![7, 6, 4, 0],
        ];
        // p = 1: squared distances; float path agrees on this small instance.
        let (c, all) = exact_weighted_minsum_centroids(&rows, &[0, 1, 2, 3], 1).unwrap();
        let w = m4().apply_weight(1.0).unwrap();
        let r = pseudo_centroid(MeasureKind::MinSum, &[0, 1, 2, 3], &w).unwrap();
        assert_eq!(c, r.centroid);
        assert_eq!(all, r.all_centroids);
    }
}
