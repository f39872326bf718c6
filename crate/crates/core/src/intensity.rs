//! Intensity-based starting methods.
//!
//! These build the initial clusters themselves rather than just seed
//! points, one cluster per iteration, always the best cluster of the
//! chosen size among the points still available. The primary methods fix
//! the size at ceil(n_o/k_o); the adaptive methods let it grow up to
//! MaxSize while consecutive neighbor distances stay within a gap-derived
//! limit. Output feeds the engine directly at Step 2.
//!
//! Every method walks the shared sorted-neighbor ordering with an
//! availability flag per point, so the expensive preprocessing happens
//! once per matrix.

use serde::{Deserialize, Serialize};

use crate::engine::{Cluster, Clustering};
use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;
use crate::measure::MeasureKind;
use crate::order::NeighborOrder;

/// One emitted starting cluster, labeled by the iteration k_o it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct StartCluster {
    pub k_o: usize,
    pub members: Vec<usize>,
    pub centroid: usize,
    pub span: f64,
}

/// The product of an intensity-based construction.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityState {
    /// Clusters in emission order (k_o = k down to 1).
    pub clusters: Vec<StartCluster>,
    /// Points still unassigned (non-empty only for interrupted runs).
    pub remaining: Vec<usize>,
    /// Set when `allow_absorb` finished with fewer than k clusters.
    pub reduced_k: Option<usize>,
}

impl IntensityState {
    pub fn centroids(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.centroid).collect()
    }

    /// Converts a completed construction into an engine clustering.
    pub fn to_clustering(&self, n: usize) -> Result<Clustering> {
        if !self.remaining.is_empty() {
            return Err(Error::IncompleteStart {
                remaining: self.remaining.len(),
            });
        }
        let clusters = self
            .clusters
            .iter()
            .map(|c| Cluster {
                members: c.members.clone(),
                centroid: c.centroid,
                all_centroids: vec![c.centroid],
                span: c.span,
            })
            .collect();
        Clustering::new(clusters, n)
    }
}

/// Which MaxSize formula the adaptive methods use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxSizeRule {
    /// MaxSize = n_o - MinSize * (k_o - 1). Degenerates to MaxSize <=
    /// MinSize and is infeasible whenever k_o does not divide n_o.
    PerPseudocode,
    /// MaxSize = n_o - GlobalMinSize * (k_o - 1).
    PerText,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    pub lambda: f64,
    pub global_min_size: usize,
    pub max_size_rule: MaxSizeRule,
    /// Let MaxSize reach |N_o| so a cluster may absorb the whole pool,
    /// proposing a smaller k.
    pub allow_absorb: bool,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            global_min_size: 2,
            max_size_rule: MaxSizeRule::PerText,
            allow_absorb: false,
        }
    }
}

impl AdaptiveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) || self.lambda.is_nan() {
            return Err(Error::BadLambda(self.lambda));
        }
        if self.global_min_size < 2 {
            return Err(Error::BadGlobalMinSize(self.global_min_size));
        }
        Ok(())
    }
}

/// Size and scan bounds for one construction iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeBounds {
    pub cluster_size: usize,
    pub scan_size: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub min_scan: usize,
    pub max_scan: usize,
    pub global_min_size: usize,
}

impl SizeBounds {
    /// Primary methods: a single fixed size ceil(n_o / k_o).
    pub fn primary(n_o: usize, k_o: usize) -> Self {
        let size = n_o.div_ceil(k_o);
        Self {
            cluster_size: size,
            scan_size: size - 1,
            min_size: size,
            max_size: size,
            min_scan: size - 1,
            max_scan: size - 1,
            global_min_size: 1,
        }
    }

    /// Adaptive methods: [MinSize, MaxSize] with the configured rule.
    pub fn adaptive(
        n_o: usize,
        k_o: usize,
        opts: &AdaptiveOptions,
    ) -> Result<Self> {
        let min_size = n_o.div_ceil(k_o);
        let reserve = match opts.max_size_rule {
            MaxSizeRule::PerPseudocode => min_size,
            MaxSizeRule::PerText => opts.global_min_size,
        };
        let max_size = if opts.allow_absorb {
            n_o
        } else {
            n_o.saturating_sub(reserve * (k_o - 1))
        };
        if max_size < min_size {
            return Err(Error::InfeasibleBounds {
                k_o,
                min_size,
                max_size,
            });
        }
        Ok(Self {
            cluster_size: min_size,
            scan_size: min_size - 1,
            min_size,
            max_size,
            min_scan: min_size - 1,
            max_scan: max_size - 1,
            global_min_size: opts.global_min_size,
        })
    }
}

struct Pool {
    avail: Vec<bool>,
    n_o: usize,
}

impl Pool {
    fn new(n: usize) -> Self {
        Self {
            avail: vec![true; n],
            n_o: n,
        }
    }

    fn first_available(&self) -> usize {
        self.avail.iter().position(|&a| a).expect("pool non-empty")
    }

    fn remove(&mut self, i: usize) {
        debug_assert!(self.avail[i]);
        self.avail[i] = false;
        self.n_o -= 1;
    }

    fn remaining(&self) -> Vec<usize> {
        (0..self.avail.len()).filter(|&i| self.avail[i]).collect()
    }
}

/// Collects the first `count` available neighbors of `anchor`.
fn nearest_available(
    anchor: usize,
    count: usize,
    order: &NeighborOrder,
    pool: &Pool,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    for &j in order.neighbors(anchor) {
        if out.len() == count {
            break;
        }
        let j = j as usize;
        if pool.avail[j] {
            out.push(j);
        }
    }
    debug_assert_eq!(out.len(), count);
    out
}

fn emit(
    pool: &mut Pool,
    clusters: &mut Vec<StartCluster>,
    k_o: usize,
    anchor: usize,
    co_members: Vec<usize>,
    span: f64,
) {
    let mut members = co_members;
    members.push(anchor);
    members.sort_unstable();
    for &j in &members {
        pool.remove(j);
    }
    clusters.push(StartCluster {
        k_o,
        members,
        centroid: anchor,
        span,
    });
}

// ---------------------------------------------------------------------------
// Primary methods
// ---------------------------------------------------------------------------

enum SizePlan<'a> {
    Dynamic,
    /// Fixed sizes for k_o = k, k-1, ...; later iterations fall back to
    /// ceil(n_o / k_o).
    FixedPrefix(&'a [usize]),
}

impl SizePlan<'_> {
    fn size_at(&self, idx: usize, n_o: usize, k_o: usize) -> usize {
        match self {
            SizePlan::Dynamic => n_o.div_ceil(k_o),
            SizePlan::FixedPrefix(sizes) => sizes
                .get(idx)
                .copied()
                .unwrap_or_else(|| n_o.div_ceil(k_o)),
        }
    }
}

/// Scan of the distance algorithm for one anchor: the value of its
/// scan_size-th available neighbor (MinMax) or the sum of the first
/// scan_size (MinSum).
fn best_anchor(
    m: &DistanceMatrix,
    order: &NeighborOrder,
    pool: &Pool,
    scan_size: usize,
    kind: MeasureKind,
    early_exit: bool,
) -> (usize, f64) {
    let mut i_star = usize::MAX;
    let mut best = f64::INFINITY;
    for i in 0..pool.avail.len() {
        if !pool.avail[i] {
            continue;
        }
        match kind {
            MeasureKind::MinMax => {
                let mut scan = 0;
                let mut last = f64::INFINITY;
                let mut completed = false;
                for &j in order.neighbors(i) {
                    let j = j as usize;
                    if !pool.avail[j] {
                        continue;
                    }
                    let d = m.at(i, j);
                    if early_exit && d >= best {
                        break;
                    }
                    scan += 1;
                    last = d;
                    if scan == scan_size {
                        completed = true;
                        break;
                    }
                }
                if completed && last < best {
                    best = last;
                    i_star = i;
                }
            }
            MeasureKind::MinSum => {
                let mut scan = 0;
                let mut sum = 0.0;
                for &j in order.neighbors(i) {
                    let j = j as usize;
                    if !pool.avail[j] {
                        continue;
                    }
                    sum += m.at(i, j);
                    scan += 1;
                    if scan == scan_size {
                        break;
                    }
                }
                if sum < best {
                    best = sum;
                    i_star = i;
                }
            }
        }
    }
    (i_star, best)
}

fn primary_run(
    m: &DistanceMatrix,
    order: &NeighborOrder,
    k: usize,
    kind: MeasureKind,
    plan: SizePlan<'_>,
    stop_before_k_o: Option<usize>,
    early_exit: bool,
) -> Result<IntensityState> {
    let n = m.n();
    if k < 1 || k > n {
        return Err(Error::BadK { k, n });
    }
    let mut pool = Pool::new(n);
    let mut clusters = Vec::with_capacity(k);
    for idx in 0..k {
        let k_o = k - idx;
        if let Some(stop) = stop_before_k_o {
            if k_o < stop {
                break;
            }
        }
        let cluster_size = plan.size_at(idx, pool.n_o, k_o);
        if cluster_size < 1 || cluster_size > pool.n_o {
            return Err(Error::BadK { k, n });
        }
        let scan_size = cluster_size - 1;
        if scan_size == 0 {
            let anchor = pool.first_available();
            emit(&mut pool, &mut clusters, k_o, anchor, Vec::new(), 0.0);
            continue;
        }
        let (anchor, span) = best_anchor(m, order, &pool, scan_size, kind, early_exit);
        let co_members = nearest_available(anchor, scan_size, order, &pool);
        emit(&mut pool, &mut clusters, k_o, anchor, co_members, span);
    }
    Ok(IntensityState {
        clusters,
        remaining: pool.remaining(),
        reduced_k: None,
    })
}

/// Builds k clusters of size ceil(n_o/k_o) each, every one with the
/// smallest MMSpan over all same-size subsets of the remaining pool.
pub fn primary_minmax(m: &DistanceMatrix, order: &NeighborOrder, k: usize) -> Result<IntensityState> {
    primary_run(m, order, k, MeasureKind::MinMax, SizePlan::Dynamic, None, true)
}

/// MinSum counterpart: each cluster minimizes the distance sum from its
/// anchor over all same-size subsets of the remaining pool.
pub fn primary_minsum(m: &DistanceMatrix, order: &NeighborOrder, k: usize) -> Result<IntensityState> {
    primary_run(m, order, k, MeasureKind::MinSum, SizePlan::Dynamic, None, false)
}

// ---------------------------------------------------------------------------
// Adaptive methods
// ---------------------------------------------------------------------------

struct Phase1 {
    distance_limit: f64,
    first_sum_limit: f64,
    delta_sum: f64,
    /// Resume position in the neighbor list per point.
    resume: Vec<usize>,
    /// Sum of the first MinScan distances per point (MinSum).
    sum_at: Vec<f64>,
}

/// Phase 1: find the best anchor at Scan = MinScan, tracking the gaps
/// between consecutive accepted distances, and derive the growth limits
/// from the winner's gap statistics.
fn phase1(
    m: &DistanceMatrix,
    order: &NeighborOrder,
    pool: &Pool,
    bounds: &SizeBounds,
    kind: MeasureKind,
    lambda: f64,
) -> Phase1 {
    let n = pool.avail.len();
    let min_scan = bounds.min_scan;
    let mut best_distance = f64::INFINITY;
    let mut best_sum = f64::INFINITY;
    let mut best_min_gap = 0.0f64;
    let mut best_sum_gap = 0.0f64;
    let mut resume = vec![0usize; n];
    let mut sum_at = vec![0.0f64; n];
    for i in 0..n {
        if !pool.avail[i] {
            continue;
        }
        let mut min_gap = f64::INFINITY;
        let mut sum = 0.0;
        let mut sum_gap = 0.0;
        let mut scan = 0usize;
        let mut prev = 0.0;
        let mut distance = f64::INFINITY;
        for (pos, &j) in order.neighbors(i).iter().enumerate() {
            let j = j as usize;
            if !pool.avail[j] {
                continue;
            }
            scan += 1;
            let d = m.at(i, j);
            sum += d;
            if scan > 1 {
                let gap = d - prev;
                sum_gap += gap;
                min_gap = min_gap.min(gap);
            }
            distance = d;
            if scan == min_scan {
                resume[i] = pos;
                sum_at[i] = sum;
                break;
            }
            prev = d;
        }
        let better = match kind {
            MeasureKind::MinMax => {
                distance < best_distance
                    || (distance == best_distance && min_gap > best_min_gap)
            }
            MeasureKind::MinSum => {
                sum < best_sum
                    || (sum == best_sum && distance < best_distance)
                    || (sum == best_sum && distance == best_distance && min_gap > best_min_gap)
            }
        };
        if better {
            best_distance = distance;
            best_sum = sum;
            best_min_gap = min_gap;
            best_sum_gap = sum_gap;
        }
    }
    // With MinScan < 2 no gap is ever observed, leaving no slack to derive.
    let target_gap = if min_scan < 2 {
        0.0
    } else {
        lambda * (best_sum_gap / (min_scan - 1) as f64) + (1.0 - lambda) * best_min_gap
    };
    let distance_limit = best_distance + target_gap;
    Phase1 {
        distance_limit,
        first_sum_limit: best_sum + target_gap,
        delta_sum: distance_limit,
        resume,
        sum_at,
    }
}

/// Phase 2: resume each anchor at its MinScan-th neighbor and extend while
/// the limit holds, up to MaxScan. Larger Scan wins; equal Scan falls back
/// to the smaller Distance (MinMax) or Sum (MinSum).
fn phase2(
    m: &DistanceMatrix,
    order: &NeighborOrder,
    pool: &Pool,
    bounds: &SizeBounds,
    kind: MeasureKind,
    ph1: &Phase1,
) -> (usize, usize, f64) {
    let n = pool.avail.len();
    let min_scan = bounds.min_scan;
    let max_scan = bounds.max_scan;
    let mut i_star = usize::MAX;
    let mut best_scan = min_scan - 1;
    let mut best_value = f64::INFINITY;
    for i in 0..n {
        if !pool.avail[i] {
            continue;
        }
        let mut scan = min_scan - 1;
        let mut value = f64::INFINITY;
        match kind {
            MeasureKind::MinMax => {
                for &j in &order.neighbors(i)[ph1.resume[i]..] {
                    let j = j as usize;
                    if !pool.avail[j] {
                        continue;
                    }
                    scan += 1;
                    let d = m.at(i, j);
                    if d > ph1.distance_limit {
                        scan -= 1;
                        break;
                    }
                    value = d;
                    if scan == max_scan {
                        break;
                    }
                }
            }
            MeasureKind::MinSum => {
                let mut sum = ph1.sum_at[i];
                let mut sum_limit = ph1.first_sum_limit;
                for &j in &order.neighbors(i)[ph1.resume[i]..] {
                    let j = j as usize;
                    if !pool.avail[j] {
                        continue;
                    }
                    scan += 1;
                    if scan > min_scan {
                        sum += m.at(i, j);
                        sum_limit += ph1.delta_sum;
                    }
                    if sum > sum_limit {
                        // `value` keeps the last accepted sum, so the
                        // candidate's score matches the cluster it keeps.
                        scan -= 1;
                        break;
                    }
                    value = sum;
                    if scan == max_scan {
                        break;
                    }
                }
            }
        }
        if scan >= min_scan
            && (scan > best_scan || (scan == best_scan && value < best_value))
        {
            i_star = i;
            best_scan = scan;
            best_value = value;
        }
    }
    (i_star, best_scan, best_value)
}

fn adaptive_run(
    m: &DistanceMatrix,
    order: &NeighborOrder,
    k: usize,
    kind: MeasureKind,
    opts: &AdaptiveOptions,
) -> Result<IntensityState> {
    opts.validate()?;
    let n = m.n();
    if k < 1 || k > n {
        return Err(Error::BadK { k, n });
    }
    let mut pool = Pool::new(n);
    let mut clusters = Vec::with_capacity(k);
    for idx in 0..k {
        let k_o = k - idx;
        if pool.n_o == 0 {
            // Earlier clusters absorbed everything.
            return Ok(IntensityState {
                reduced_k: Some(clusters.len()),
                clusters,
                remaining: Vec::new(),
            });
        }
        let bounds = SizeBounds::adaptive(pool.n_o, k_o, opts)?;
        if bounds.min_scan == 0 {
            let anchor = pool.first_available();
            emit(&mut pool, &mut clusters, k_o, anchor, Vec::new(), 0.0);
            continue;
        }
        let ph1 = phase1(m, order, &pool, &bounds, kind, opts.lambda);
        let (anchor, best_scan, span) = phase2(m, order, &pool, &bounds, kind, &ph1);
        let co_members = nearest_available(anchor, best_scan, order, &pool);
        emit(&mut pool, &mut clusters, k_o, anchor, co_members, span);
    }
    Ok(IntensityState {
        clusters,
        remaining: pool.remaining(),
        reduced_k: None,
    })
}

/// Adaptive MinMax construction: cluster sizes are chosen per iteration by
/// growing each anchor's scan while d stays within DistanceLimit.
pub fn adaptive_minmax(
    m: &DistanceMatrix,
    order: &NeighborOrder,
    k: usize,
    opts: &AdaptiveOptions,
) -> Result<IntensityState> {
    adaptive_run(m, order, k, MeasureKind::MinMax, opts)
}

/// Adaptive MinSum construction: the sum limit starts at BestSum plus the
/// target gap and grows by DeltaSum per extra scan.
pub fn adaptive_minsum(
    m: &DistanceMatrix,
    order: &NeighborOrder,
    k: usize,
    opts: &AdaptiveOptions,
) -> Result<IntensityState> {
    adaptive_run(m, order, k, MeasureKind::MinSum, opts)
}

// ---------------------------------------------------------------------------
// ClusterSize refinement
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementApproach {
    /// One Step-2 reassignment right after the primary pass supplies the
    /// size profile.
    Approach1,
    /// A full engine run supplies the size profile.
    Approach2,
}

/// Re-runs the primary method with cluster sizes harvested from a Step-2
/// pass (approach 1) or a full K-PC run (approach 2), arranged in
/// descending order so earlier iterations, which see a larger pool, get
/// the larger targets. With `interrupt_at` = Some(k_o*), approach 1 stops
/// the first pass at k_o* and later iterations fall back to the default
/// size rule.
pub fn cluster_size_refinement(
    m: &DistanceMatrix,
    order: &NeighborOrder,
    k: usize,
    approach: RefinementApproach,
    base: MeasureKind,
    interrupt_at: Option<usize>,
) -> Result<IntensityState> {
    let n = m.n();
    if k < 2 || k > n {
        return Err(Error::BadK { k, n });
    }
    if let Some(stop) = interrupt_at {
        if stop < 1 || stop > k {
            return Err(Error::BadK { k: stop, n });
        }
    }
    let early = base == MeasureKind::MinMax;
    let sizes: Vec<usize> = match approach {
        RefinementApproach::Approach1 => {
            let first = primary_run(m, order, k, base, SizePlan::Dynamic, interrupt_at, early)?;
            let mut counts = step2_size_counts(&first, m);
            counts.sort_unstable_by(|a, b| b.cmp(a));
            counts
        }
        RefinementApproach::Approach2 => {
            let first = primary_run(m, order, k, base, SizePlan::Dynamic, None, early)?;
            let cfg = crate::engine::EngineConfig::new(match base {
                MeasureKind::MinMax => crate::measure::SeparationMeasure::min_max(),
                MeasureKind::MinSum => crate::measure::SeparationMeasure::min_sum(),
            });
            let report = crate::engine::run_kpc(
                crate::engine::Start::Clustering(first.to_clustering(n)?),
                &cfg,
                m,
            )?;
            let mut counts: Vec<usize> = report
                .final_clustering
                .clusters()
                .iter()
                .map(|c| c.members.len())
                .collect();
            counts.sort_unstable_by(|a, b| b.cmp(a));
            counts
        }
    };
    primary_run(m, order, k, base, SizePlan::FixedPrefix(&sizes), None, early)
}

/// Cluster sizes after one Step-2 reassignment of the already-assigned
/// points among the emitted centroids (stay-on-tie, lowest index).
fn step2_size_counts(state: &IntensityState, m: &DistanceMatrix) -> Vec<usize> {
    let centroids: Vec<usize> = state.centroids();
    let mut counts = vec![0usize; centroids.len()];
    for (h, cluster) in state.clusters.iter().enumerate() {
        for &j in &cluster.members {
            if j == cluster.centroid {
                counts[h] += 1;
                continue;
            }
            let own_d = m.at(cluster.centroid, j);
            let mut best: Option<(f64, usize, usize)> = None;
            for (h2, &c) in centroids.iter().enumerate() {
                if h2 == h {
                    continue;
                }
                let d = m.at(c, j);
                match best {
                    Some((bd, _, bc)) if d > bd || (d == bd && c > bc) => {}
                    _ => best = Some((d, h2, c)),
                }
            }
            match best {
                Some((d, h2, _)) if d < own_d => counts[h2] += 1,
                _ => counts[h] += 1,
            }
        }
    }
    counts
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

const SUBSET_LIMIT: u64 = 1_000_000;

fn binomial_capped(n: usize, v: usize, cap: u64) -> u64 {
    let mut r: u128 = 1;
    for t in 0..v.min(n - v) {
        r = match r.checked_mul((n - t) as u128) {
            Some(x) => x / (t as u128 + 1),
            None => return cap + 1,
        };
        if r > cap as u128 {
            return cap + 1;
        }
    }
    r as u64
}

/// Exhaustive best cluster of size v inside `candidates`: enumerates every
/// v-subset and returns the span minimizer (lexicographically smallest
/// member set on ties, lowest-index centroid within it). This is the
/// independent certificate for the primary construction.
pub fn brute_force_best_cluster(
    m: &DistanceMatrix,
    candidates: &[usize],
    v: usize,
    kind: MeasureKind,
) -> Result<(Vec<usize>, usize, f64)> {
    let n_o = candidates.len();
    if v < 1 || v > n_o {
        return Err(Error::BadK { k: v, n: n_o });
    }
    if binomial_capped(n_o, v, SUBSET_LIMIT) > SUBSET_LIMIT {
        return Err(Error::CombinatorialBlowup {
            n: n_o,
            v,
            limit: SUBSET_LIMIT,
        });
    }
    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();

    let mut best_span = f64::INFINITY;
    let mut best_subset: Vec<usize> = Vec::new();
    let mut best_centroid = usize::MAX;
    let mut subset: Vec<usize> = (0..v).collect();
    loop {
        let points: Vec<usize> = subset.iter().map(|&t| sorted[t]).collect();
        let mut span = f64::INFINITY;
        let mut centroid = usize::MAX;
        for &i in &points {
            let mut val: f64 = 0.0;
            for &j in &points {
                if j == i {
                    continue;
                }
                let d = m.at(i, j);
                match kind {
                    MeasureKind::MinMax => val = val.max(d),
                    MeasureKind::MinSum => val += d,
                }
            }
            if val < span {
                span = val;
                centroid = i;
            }
        }
        if span < best_span {
            best_span = span;
            best_subset = points;
            best_centroid = centroid;
        }
        // Next combination in lexicographic order.
        let mut t = v;
        loop {
            if t == 0 {
                return Ok((best_subset, best_centroid, best_span));
            }
            t -= 1;
            if subset[t] != t + n_o - v {
                subset[t] += 1;
                for u in (t + 1)..v {
                    subset[u] = subset[u - 1] + 1;
                }
                break;
            }
        }
    }
}
