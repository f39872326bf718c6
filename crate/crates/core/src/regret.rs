//! Regret-threshold reassignment, diversified/stochastic restarts, and the
//! Value cluster-quality measure.
//!
//! Regret(j) = ADist(j) - RDist(j): the cost of not moving j to its nearest
//! foreign centroid. The regret-threshold variant performs only the top
//! fraction F of candidate moves per Step 2; F = 1 reproduces the plain
//! iteration exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    run_loop, Cluster, Clustering, EngineConfig, Reassigner, RunReport, Start,
};
use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;

/// Per-iteration choice of the admitted fraction F.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FSchedule {
    Constant { f: f64 },
    /// Linear interpolation from `start` (iteration 1) to `end` (the
    /// iteration cap), typically decreasing.
    Linear { start: f64, end: f64 },
}

fn check_fraction(f: f64) -> Result<f64> {
    if f > 0.0 && f <= 1.0 {
        Ok(f)
    } else {
        Err(Error::BadFraction(f))
    }
}

impl FSchedule {
    pub fn constant(f: f64) -> Result<Self> {
        check_fraction(f)?;
        Ok(Self::Constant { f })
    }

    pub fn linear(start: f64, end: f64) -> Result<Self> {
        check_fraction(start)?;
        check_fraction(end)?;
        Ok(Self::Linear { start, end })
    }

    pub fn f_at(&self, iteration: usize, max_iterations: usize) -> f64 {
        match *self {
            Self::Constant { f } => f,
            Self::Linear { start, end } => {
                if max_iterations <= 1 {
                    return end;
                }
                let t = (iteration - 1) as f64 / (max_iterations - 1) as f64;
                start + (end - start) * t
            }
        }
    }
}

/// One candidate move: a point strictly closer to a foreign centroid than
/// to its own.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretEntry {
    pub point: usize,
    pub assign_centroid: usize,
    pub reassign_centroid: usize,
    pub target_cluster: usize,
    pub a_dist: f64,
    pub r_dist: f64,
    pub regret: f64,
}

/// Candidate moves under the current centroid sets. Only strict
/// improvements qualify; equal-distance swaps are churn, not moves.
pub fn candidate_list(c: &Clustering, m: &DistanceMatrix) -> Vec<RegretEntry> {
    candidates_from(c.clusters(), c.assignment(), m)
}

fn candidates_from(
    clusters: &[Cluster],
    assignment: &[usize],
    m: &DistanceMatrix,
) -> Vec<RegretEntry> {
    let mut out = Vec::new();
    for (j, &own_h) in assignment.iter().enumerate() {
        let own = &clusters[own_h];
        if own.all_centroids.contains(&j) {
            continue;
        }
        let (a_dist, assign_centroid) = min_by_dist(&own.all_centroids, j, m);
        let mut best: Option<(f64, usize, usize)> = None;
        for (h, cl) in clusters.iter().enumerate() {
            if h == own_h {
                continue;
            }
            for &i in &cl.all_centroids {
                let d = m.at(i, j);
                match best {
                    Some((bd, _, bi)) if d > bd || (d == bd && i > bi) => {}
                    _ => best = Some((d, h, i)),
                }
            }
        }
        if let Some((r_dist, target_cluster, reassign_centroid)) = best {
            if r_dist < a_dist {
                out.push(RegretEntry {
                    point: j,
                    assign_centroid,
                    reassign_centroid,
                    target_cluster,
                    a_dist,
                    r_dist,
                    regret: a_dist - r_dist,
                });
            }
        }
    }
    out
}

fn min_by_dist(centroids: &[usize], j: usize, m: &DistanceMatrix) -> (f64, usize) {
    let mut best = (f64::INFINITY, usize::MAX);
    for &i in centroids {
        let d = m.at(i, j);
        if d < best.0 || (d == best.0 && i < best.1) {
            best = (d, i);
        }
    }
    best
}

/// Selected moves for fraction `f`: the threshold T is the r-th largest
/// candidate regret with r = max(1, ceil(f * |candidates|)); everything at
/// or above T moves, capped at `max_select` keeping the largest regrets.
fn select_moves(
    mut candidates: Vec<RegretEntry>,
    f: f64,
    max_select: usize,
) -> Vec<RegretEntry> {
    if candidates.is_empty() {
        return candidates;
    }
    let r = ((f * candidates.len() as f64).ceil() as usize)
        .max(1)
        .min(candidates.len());
    candidates.sort_by(|a, b| b.regret.total_cmp(&a.regret).then(a.point.cmp(&b.point)));
    let threshold = candidates[r - 1].regret;
    candidates.retain(|e| e.regret >= threshold);
    candidates.truncate(max_select);
    candidates
}

/// One regret-threshold Step 2: reassigns only the selected subset.
/// Returns the updated clustering and the number of points moved.
pub fn regret_step(
    c: &Clustering,
    cfg: &EngineConfig,
    m: &DistanceMatrix,
    f: f64,
    max_select: usize,
) -> Result<(Clustering, usize)> {
    check_fraction(f)?;
    if max_select == 0 {
        return Err(Error::BadMaxSelect);
    }
    let selected = select_moves(candidate_list(c, m), f, max_select);
    if selected.is_empty() {
        return Ok((c.clone(), 0));
    }
    let mut targets = c.assignment().to_vec();
    for e in &selected {
        targets[e.point] = e.target_cluster;
    }
    let next = crate::engine::apply_step2_targets(c, &targets, cfg, m)?;
    Ok((next, selected.len()))
}

struct RegretMover<'a> {
    schedule: &'a FSchedule,
    max_select: usize,
}

impl Reassigner for RegretMover<'_> {
    fn pass(
        &mut self,
        clusters: &[Cluster],
        assignment: &[usize],
        iteration: usize,
        max_iterations: usize,
        m: &DistanceMatrix,
    ) -> Result<(Vec<usize>, usize)> {
        let f = check_fraction(self.schedule.f_at(iteration, max_iterations))?;
        let selected = select_moves(candidates_from(clusters, assignment, m), f, self.max_select);
        let mut targets = assignment.to_vec();
        for e in &selected {
            targets[e.point] = e.target_cluster;
        }
        Ok((targets, selected.len()))
    }
}

/// K-PC with regret-thresholded Step 2. Termination rules and reporting
/// match `run_kpc`; `reassigned_counts` records the selected counts.
pub fn run_regret_threshold(
    start: Start,
    cfg: &EngineConfig,
    m: &DistanceMatrix,
    schedule: &FSchedule,
    max_select: usize,
) -> Result<RunReport> {
    if max_select == 0 {
        return Err(Error::BadMaxSelect);
    }
    let mut mover = RegretMover {
        schedule,
        max_select,
    };
    run_loop(start, cfg, m, &mut mover)
}

// ---------------------------------------------------------------------------
// Quality
// ---------------------------------------------------------------------------

/// How centroids themselves enter the d_o sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidConvention {
    /// d_o(j) = 0 for centroids.
    Exclude,
    /// d_1(j) = 0 for centroids, so d_o(j) = d_2(j).
    Include,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accent {
    Mean,
    /// Mean_o(h) = D_o(h)^2 / |C(h)| to accentuate large-margin clusters.
    SquaredMean,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClusterQuality {
    /// D_o(h): sum of d_o over the cluster.
    pub d_o_sum: f64,
    /// Mean_o(h).
    pub mean: f64,
}

/// Per-point margins and the aggregate Value. Larger is better: points are
/// more decisively placed with their own centroid than with any rival.
#[derive(Clone, Debug, Serialize)]
pub struct QualityReport {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d_o: Vec<f64>,
    pub per_cluster: Vec<ClusterQuality>,
    pub value: f64,
}

/// d_1(j): distance from j to the nearest own-cluster centroid; d_2(j): to
/// the nearest foreign centroid; d_o = d_2 - d_1. Distances here read
/// d(point, centroid).
pub fn quality(
    c: &Clustering,
    m: &DistanceMatrix,
    convention: CentroidConvention,
    accent: Accent,
) -> Result<QualityReport> {
    if c.k() < 2 {
        return Err(Error::SingleCluster);
    }
    let n = c.n();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let mut d_o = vec![0.0; n];
    for (j, &own_h) in c.assignment().iter().enumerate() {
        let own = &c.clusters()[own_h];
        let is_centroid = own.all_centroids.contains(&j);
        let foreign = foreign_min(c, own_h, j, m);
        d2[j] = foreign;
        if is_centroid {
            d1[j] = 0.0;
            d_o[j] = match convention {
                CentroidConvention::Exclude => 0.0,
                CentroidConvention::Include => foreign,
            };
        } else {
            let own_min = own
                .all_centroids
                .iter()
                .map(|&i| m.at(j, i))
                .fold(f64::INFINITY, f64::min);
            d1[j] = own_min;
            d_o[j] = foreign - own_min;
        }
    }
    let mut per_cluster = Vec::with_capacity(c.k());
    let mut value = 0.0;
    for cl in c.clusters() {
        let sum: f64 = cl.members.iter().map(|&j| d_o[j]).sum();
        let mean = match accent {
            Accent::Mean => sum / cl.members.len() as f64,
            Accent::SquaredMean => sum * sum / cl.members.len() as f64,
        };
        per_cluster.push(ClusterQuality { d_o_sum: sum, mean });
        value += mean;
    }
    Ok(QualityReport {
        d1,
        d2,
        d_o,
        per_cluster,
        value,
    })
}

fn foreign_min(c: &Clustering, own_h: usize, j: usize, m: &DistanceMatrix) -> f64 {
    let mut best = f64::INFINITY;
    for (h, cl) in c.clusters().iter().enumerate() {
        if h == own_h {
            continue;
        }
        for &i in &cl.all_centroids {
            best = best.min(m.at(j, i));
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Restarts
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartMode {
    /// Move each point to its second-closest pseudo-centroid.
    Second,
    Third,
    Farthest,
}

/// Builds a deliberately different clustering from a finished one by moving
/// non-centroid points to a foreign centroid chosen by `mode`. With
/// `partial_fraction` < 1 only that fraction moves; points with the largest
/// d_o margins stay put. Centroid sets are carried over so the engine can
/// restart at Step 1.
pub fn diversified_restart(
    c: &Clustering,
    cfg: &EngineConfig,
    m: &DistanceMatrix,
    mode: RestartMode,
    partial_fraction: f64,
) -> Result<Clustering> {
    if c.k() < 2 {
        return Err(Error::SingleCluster);
    }
    if !(0.0..=1.0).contains(&partial_fraction) || partial_fraction.is_nan() {
        return Err(Error::BadFraction(partial_fraction));
    }
    // Movable points ordered by ascending margin; the largest margins are
    // kept in place when only a fraction moves.
    let mut movable: Vec<(f64, usize, usize)> = Vec::new(); // (d_o, point, target)
    for (j, &own_h) in c.assignment().iter().enumerate() {
        let own = &c.clusters()[own_h];
        if own.all_centroids.contains(&j) {
            continue;
        }
        let d1 = own
            .all_centroids
            .iter()
            .map(|&i| m.at(j, i))
            .fold(f64::INFINITY, f64::min);
        let (d2, target) = ranked_foreign(c, own_h, j, m, mode);
        movable.push((d2 - d1, j, target));
    }
    movable.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let count = (partial_fraction * movable.len() as f64).floor() as usize;
    let mut targets = c.assignment().to_vec();
    for &(_, j, target) in movable.iter().take(count) {
        targets[j] = target;
    }
    crate::engine::apply_step2_targets(c, &targets, cfg, m)
}

/// (d_2(j), target cluster) where the target centroid is picked by rank:
/// second closest overall = nearest foreign, third = next, farthest = last.
fn ranked_foreign(
    c: &Clustering,
    own_h: usize,
    j: usize,
    m: &DistanceMatrix,
    mode: RestartMode,
) -> (f64, usize) {
    let mut foreign: Vec<(f64, usize, usize)> = Vec::new(); // (d, centroid, cluster)
    for (h, cl) in c.clusters().iter().enumerate() {
        if h == own_h {
            continue;
        }
        for &i in &cl.all_centroids {
            foreign.push((m.at(j, i), i, h));
        }
    }
    foreign.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let d2 = foreign[0].0;
    let pick = match mode {
        RestartMode::Second => 0,
        RestartMode::Third => 1.min(foreign.len() - 1),
        RestartMode::Farthest => {
            let max = foreign
                .iter()
                .map(|e| e.0)
                .fold(f64::NEG_INFINITY, f64::max);
            foreign.iter().position(|e| e.0 == max).unwrap()
        }
    };
    (d2, foreign[pick].2)
}

/// Stochastic variant: points with d_o above `cutoff` never move; the rest
/// move to their second-closest centroid with probability inversely related
/// to their margin, p = 1 / (1 + d_o / scale) with scale the mean positive
/// margin. Deterministic for a fixed seed.
pub fn stochastic_restart(
    c: &Clustering,
    cfg: &EngineConfig,
    m: &DistanceMatrix,
    cutoff: f64,
    rng_seed: u64,
) -> Result<Clustering> {
    if c.k() < 2 {
        return Err(Error::SingleCluster);
    }
    let mut movable: Vec<(f64, usize, usize)> = Vec::new();
    for (j, &own_h) in c.assignment().iter().enumerate() {
        let own = &c.clusters()[own_h];
        if own.all_centroids.contains(&j) {
            continue;
        }
        let d1 = own
            .all_centroids
            .iter()
            .map(|&i| m.at(j, i))
            .fold(f64::INFINITY, f64::min);
        let (d2, target) = ranked_foreign(c, own_h, j, m, RestartMode::Second);
        movable.push((d2 - d1, j, target));
    }
    let positive: Vec<f64> = movable.iter().map(|e| e.0).filter(|&v| v > 0.0).collect();
    let scale = if positive.is_empty() {
        1.0
    } else {
        positive.iter().sum::<f64>() / positive.len() as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut targets = c.assignment().to_vec();
    for &(d_o, j, target) in &movable {
        if d_o > cutoff {
            continue;
        }
        let p = if d_o <= 0.0 { 1.0 } else { 1.0 / (1.0 + d_o / scale) };
        if rng.random::<f64>() < p {
            targets[j] = target;
        }
    }
    crate::engine::apply_step2_targets(c, &targets, cfg, m)
}
