//! Diversity-based starting methods: greedy max-min dispersion and its
//! refined, compound, targeted, compactness-tie-broken, and
//! successive-elimination variants.
//!
//! All of them grow an ordered seed set H_o one point at a time while
//! maintaining MinD(i) = min distance from each candidate i to the points
//! chosen so far, updated incrementally in O(n) per step. The recorded
//! MinD(i(k_o)) trace doubles as a diagnostic for choosing k: an abrupt
//! drop marks a k_o past the natural cluster count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;
use crate::measure::{pseudo_centroid, MeasureKind};

/// A (possibly partial) seed selection: the chosen sequence H_o, the
/// untouched candidates I_o, and per-step diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct DiversityState {
    /// H_o in selection order.
    pub chosen: Vec<usize>,
    /// I_o = N \ H_o, ascending.
    pub remaining: Vec<usize>,
    /// MinD(i(k_o)) for k_o = 2..=|H_o|.
    pub mind_trace: Vec<f64>,
    /// Final MinD(i(k)) of each executed pass (refined/compound methods).
    pub pass_maxmins: Vec<f64>,
    /// Number of construction passes executed.
    pub passes: usize,
    /// Set when elimination exhausted the candidate pool before k picks,
    /// a sign that k was chosen too large.
    pub k_too_large: bool,
}

impl DiversityState {
    fn new(chosen: Vec<usize>, mind_trace: Vec<f64>, n: usize) -> Self {
        let remaining = (0..n).filter(|i| !chosen.contains(i)).collect();
        Self {
            chosen,
            remaining,
            mind_trace,
            pass_maxmins: Vec::new(),
            passes: 1,
            k_too_large: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartPick {
    /// Reseed from the last element i(k).
    Last,
    /// Reseed from the middle element i(round((k-1)/2)).
    Middle,
}

/// Rule for deriving the target T from a prior run's MinD trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    Mean,
    Median,
}

/// Target-distance selection parameters. The effective slack band is
/// `f * t` when a fraction is given, otherwise the absolute `t0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub t: f64,
    pub t0: f64,
    pub f: f64,
    pub t_rule: TargetRule,
}

impl TargetSpec {
    pub fn new(t: f64) -> Self {
        Self {
            t,
            t0: 0.0,
            f: 0.0,
            t_rule: TargetRule::Mean,
        }
    }

    /// Derives T from the MinD trace of a completed run.
    pub fn from_prior(prior: &DiversityState, t_rule: TargetRule, t0: f64, f: f64) -> Self {
        let t = derive_target(&prior.mind_trace, t_rule);
        Self { t, t0, f, t_rule }
    }

    pub fn effective_slack(&self) -> f64 {
        if self.f > 0.0 {
            self.f * self.t
        } else {
            self.t0
        }
    }
}

fn derive_target(trace: &[f64], rule: TargetRule) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    match rule {
        TargetRule::Mean => trace.iter().sum::<f64>() / trace.len() as f64,
        TargetRule::Median => {
            let mut sorted = trace.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mid = sorted.len() / 2;
            if sorted.len() % 2 == 1 {
                sorted[mid]
            } else {
                0.5 * (sorted[mid - 1] + sorted[mid])
            }
        }
    }
}

fn check_k_seed(m: &DistanceMatrix, k: usize, k_min: usize, seed: usize) -> Result<()> {
    if k < k_min || k > m.n() {
        return Err(Error::BadK { k, n: m.n() });
    }
    if seed >= m.n() {
        return Err(Error::IndexOutOfRange {
            index: seed,
            n: m.n(),
        });
    }
    Ok(())
}

/// Incremental MinD bookkeeping for one construction pass.
struct Pass<'a> {
    m: &'a DistanceMatrix,
    in_h: Vec<bool>,
    mind: Vec<f64>,
    chosen: Vec<usize>,
    trace: Vec<f64>,
}

impl<'a> Pass<'a> {
    fn start(m: &'a DistanceMatrix, seed: usize) -> Self {
        let n = m.n();
        let mut in_h = vec![false; n];
        in_h[seed] = true;
        let mind = (0..n).map(|i| m.at(i, seed)).collect();
        Self {
            m,
            in_h,
            mind,
            chosen: vec![seed],
            trace: Vec::new(),
        }
    }

    /// Resumes from an existing H_o (computes MinD from scratch).
    fn resume(m: &'a DistanceMatrix, chosen: Vec<usize>, trace: Vec<f64>) -> Self {
        let n = m.n();
        let mut in_h = vec![false; n];
        for &i in &chosen {
            in_h[i] = true;
        }
        let mind = (0..n)
            .map(|i| {
                chosen
                    .iter()
                    .map(|&j| m.at(i, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        Self {
            m,
            in_h,
            mind,
            chosen,
            trace,
        }
    }

    fn add(&mut self, i: usize) {
        self.trace.push(self.mind[i]);
        self.in_h[i] = true;
        self.chosen.push(i);
        for j in 0..self.m.n() {
            if !self.in_h[j] {
                self.mind[j] = self.mind[j].min(self.m.at(j, i));
            }
        }
    }

    fn candidates(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.m.n()).filter(|&i| !self.in_h[i])
    }

    /// arg max MinD(i), lowest index on ties.
    fn pick_maxmin(&self) -> usize {
        let mut best: Option<(f64, usize)> = None;
        for i in self.candidates() {
            match best {
                Some((bd, _)) if self.mind[i] <= bd => {}
                _ => best = Some((self.mind[i], i)),
            }
        }
        best.expect("candidates remain").1
    }

    /// arg min |MinD(i) - t|, lowest index on ties.
    fn pick_targeted(&self, t: f64) -> usize {
        let mut best: Option<(f64, usize)> = None;
        for i in self.candidates() {
            let dev = (self.mind[i] - t).abs();
            match best {
                Some((bd, _)) if dev >= bd => {}
                _ => best = Some((dev, i)),
            }
        }
        best.expect("candidates remain").1
    }

    fn finish(self) -> (Vec<usize>, Vec<f64>) {
        (self.chosen, self.trace)
    }
}

fn maxmin_pass(m: &DistanceMatrix, k: usize, seed: usize) -> (Vec<usize>, Vec<f64>) {
    let mut pass = Pass::start(m, seed);
    for _ in 2..=k {
        let i = pass.pick_maxmin();
        pass.add(i);
    }
    pass.finish()
}

fn maxmin_extend(
    m: &DistanceMatrix,
    chosen: Vec<usize>,
    trace: Vec<f64>,
    k: usize,
) -> (Vec<usize>, Vec<f64>) {
    let mut pass = Pass::resume(m, chosen, trace);
    while pass.chosen.len() < k {
        let i = pass.pick_maxmin();
        pass.add(i);
    }
    pass.finish()
}

/// Greedy max-min dispersion from a seed point: each added point maximizes
/// its minimum distance to the points chosen so far.
pub fn simple_diversity(m: &DistanceMatrix, k: usize, seed_point: usize) -> Result<DiversityState> {
    check_k_seed(m, k, 1, seed_point)?;
    let (chosen, trace) = maxmin_pass(m, k, seed_point);
    Ok(DiversityState::new(chosen, trace, m.n()))
}

fn middle_index(k: usize) -> usize {
    let k_o = (((k - 1) as f64) / 2.0).round() as usize;
    k_o.max(2) - 1
}

/// Re-runs the greedy pass, reseeding from the last (or middle) element,
/// while the final MinD(i(k)) strictly improves; the last improving pass is
/// returned. Pass count is capped by `max_restarts`.
pub fn refined_diversity(
    m: &DistanceMatrix,
    k: usize,
    seed_point: usize,
    restart_pick: RestartPick,
    max_restarts: usize,
) -> Result<DiversityState> {
    check_k_seed(m, k, 2, seed_point)?;
    let max_restarts = max_restarts.max(1);
    let mut prev_maxmin = f64::NEG_INFINITY;
    let mut best: Option<(Vec<usize>, Vec<f64>)> = None;
    let mut pass_maxmins = Vec::new();
    let mut seed = seed_point;
    for _ in 0..max_restarts {
        let (chosen, trace) = maxmin_pass(m, k, seed);
        let current = *trace.last().expect("k >= 2 yields a trace");
        pass_maxmins.push(current);
        if current <= prev_maxmin {
            break;
        }
        prev_maxmin = current;
        seed = match restart_pick {
            RestartPick::Last => *chosen.last().unwrap(),
            RestartPick::Middle => chosen[middle_index(k)],
        };
        best = Some((chosen, trace));
    }
    let (chosen, trace) = best.expect("first pass always improves on -inf");
    let mut state = DiversityState::new(chosen, trace, m.n());
    state.passes = pass_maxmins.len();
    state.pass_maxmins = pass_maxmins;
    Ok(state)
}

/// Two-stage refined construction: optimize the prefix of size `k_check` to
/// a local maximum first, then extend to k with a fresh improvement loop
/// (full rebuilds once an extension pass improves).
pub fn compound_diversity(
    m: &DistanceMatrix,
    k: usize,
    k_check: usize,
    seed_point: usize,
    max_restarts: usize,
) -> Result<DiversityState> {
    check_k_seed(m, k, 2, seed_point)?;
    if k_check < 2 || k_check + 1 > k {
        return Err(Error::BadKCheck { k_check, k });
    }
    let max_restarts = max_restarts.max(1);
    let mut pass_maxmins = Vec::new();

    // Stage 1: local optimum at size k_check.
    let mut prev = f64::NEG_INFINITY;
    let mut stage1: Option<(Vec<usize>, Vec<f64>)> = None;
    let mut seed = seed_point;
    for _ in 0..max_restarts {
        let (chosen, trace) = maxmin_pass(m, k_check, seed);
        let current = *trace.last().unwrap();
        pass_maxmins.push(current);
        if current <= prev {
            break;
        }
        prev = current;
        seed = *chosen.last().unwrap();
        stage1 = Some((chosen, trace));
    }
    let (h1, t1) = stage1.expect("first pass always improves on -inf");

    // Stage 2: extend to k, then keep rebuilding from scratch while the
    // final MinD(i(k)) improves.
    let mut prev = f64::NEG_INFINITY;
    let mut best: Option<(Vec<usize>, Vec<f64>)> = None;
    let mut first = true;
    let mut seed = 0;
    for _ in 0..max_restarts {
        let (chosen, trace) = if first {
            first = false;
            maxmin_extend(m, h1.clone(), t1.clone(), k)
        } else {
            maxmin_pass(m, k, seed)
        };
        let current = *trace.last().unwrap();
        pass_maxmins.push(current);
        if current <= prev {
            break;
        }
        prev = current;
        seed = *chosen.last().unwrap();
        best = Some((chosen, trace));
    }
    let (chosen, trace) = best.expect("first pass always improves on -inf");
    let mut state = DiversityState::new(chosen, trace, m.n());
    state.passes = pass_maxmins.len();
    state.pass_maxmins = pass_maxmins;
    Ok(state)
}

/// Target-seeking variant: each added point minimizes |MinD(i) - T|.
pub fn targeted_simple(
    m: &DistanceMatrix,
    k: usize,
    spec: &TargetSpec,
    seed_point: usize,
) -> Result<DiversityState> {
    check_k_seed(m, k, 2, seed_point)?;
    if !spec.t.is_finite() {
        return Err(Error::NonFiniteTarget(spec.t));
    }
    let mut pass = Pass::start(m, seed_point);
    for _ in 2..=k {
        let i = pass.pick_targeted(spec.t);
        pass.add(i);
    }
    let (chosen, trace) = pass.finish();
    Ok(DiversityState::new(chosen, trace, m.n()))
}

/// Compactness rule applied inside a slack band of near-tied candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompactRule {
    /// Minimize MaxD(i) = max distance to the chosen points.
    MaxD,
    /// Minimize SumD(i) = total distance to the chosen points.
    SumD,
}

/// Targeted construction with flexible tie-breaking. The target T is the
/// mean MinD within the prior H_o, the first point is the prior member
/// whose MinD is closest to that mean, and each step picks the most compact
/// candidate (by `compact_rule`) among those within `spec`'s slack of the
/// minimum deviation.
pub fn targeted_tiebreak(
    m: &DistanceMatrix,
    k: usize,
    spec: &TargetSpec,
    prior: &DiversityState,
    compact_rule: CompactRule,
) -> Result<DiversityState> {
    if prior.chosen.len() != k {
        return Err(Error::BadK { k, n: m.n() });
    }
    check_k_seed(m, k, 2, 0)?;
    let (t, i_sharp) = mean_mind_seed(m, &prior.chosen);
    let slack = TargetSpec {
        t,
        t0: spec.t0,
        f: spec.f,
        t_rule: spec.t_rule,
    }
    .effective_slack();

    let mut pass = Pass::start(m, i_sharp);
    let mut compact = CompactTrack::start(m, i_sharp);
    for _ in 2..=k {
        let mut min_dev = f64::INFINITY;
        for i in pass.candidates() {
            min_dev = min_dev.min((pass.mind[i] - t).abs());
        }
        let mut best: Option<(f64, usize)> = None;
        for i in pass.candidates() {
            if (pass.mind[i] - t).abs() > min_dev + slack {
                continue;
            }
            let score = compact.score(i, compact_rule);
            match best {
                Some((bs, _)) if score >= bs => {}
                _ => best = Some((score, i)),
            }
        }
        let i = best.expect("band contains the deviation minimizer").1;
        pass.add(i);
        compact.add(i);
    }
    let (chosen, trace) = pass.finish();
    Ok(DiversityState::new(chosen, trace, m.n()))
}

/// MeanMinD over H_o and the member i# whose within-set MinD is closest to
/// it (lowest index on ties).
pub fn mean_mind_seed(m: &DistanceMatrix, chosen: &[usize]) -> (f64, usize) {
    let mind_o: Vec<f64> = chosen
        .iter()
        .map(|&i| {
            chosen
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| m.at(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mean = mind_o.iter().sum::<f64>() / chosen.len() as f64;
    let mut best = (f64::INFINITY, usize::MAX);
    for (&i, &v) in chosen.iter().zip(&mind_o) {
        let dev = (v - mean).abs();
        if dev < best.0 || (dev == best.0 && i < best.1) {
            best = (dev, i);
        }
    }
    (mean, best.1)
}

/// Incremental MaxD/SumD values toward the chosen set.
struct CompactTrack<'a> {
    m: &'a DistanceMatrix,
    maxd: Vec<f64>,
    sumd: Vec<f64>,
}

impl<'a> CompactTrack<'a> {
    fn start(m: &'a DistanceMatrix, seed: usize) -> Self {
        let n = m.n();
        Self {
            m,
            maxd: (0..n).map(|i| m.at(i, seed)).collect(),
            sumd: (0..n).map(|i| m.at(i, seed)).collect(),
        }
    }

    fn add(&mut self, chosen: usize) {
        for i in 0..self.m.n() {
            let d = self.m.at(i, chosen);
            self.maxd[i] = self.maxd[i].max(d);
            self.sumd[i] += d;
        }
    }

    fn score(&self, i: usize, rule: CompactRule) -> f64 {
        match rule {
            CompactRule::MaxD => self.maxd[i],
            CompactRule::SumD => self.sumd[i],
        }
    }
}

/// Max-min selection with compactness tie-breaking: candidates within `t0`
/// of the step's best MinD form the band, and the most compact one wins.
pub fn compact_maxmin(
    m: &DistanceMatrix,
    k: usize,
    t0: f64,
    seed_point: usize,
    compact_rule: CompactRule,
) -> Result<DiversityState> {
    check_k_seed(m, k, 2, seed_point)?;
    if t0 < 0.0 || t0.is_nan() {
        return Err(Error::NegativeSlack(t0));
    }
    let mut pass = Pass::start(m, seed_point);
    let mut compact = CompactTrack::start(m, seed_point);
    for _ in 2..=k {
        let mut maxmin = f64::NEG_INFINITY;
        for i in pass.candidates() {
            maxmin = maxmin.max(pass.mind[i]);
        }
        let mut best: Option<(f64, usize)> = None;
        for i in pass.candidates() {
            if pass.mind[i] < maxmin - t0 {
                continue;
            }
            let score = compact.score(i, compact_rule);
            match best {
                Some((bs, _)) if score >= bs => {}
                _ => best = Some((score, i)),
            }
        }
        let i = best.expect("band contains the max-min point").1;
        pass.add(i);
        compact.add(i);
    }
    let (chosen, trace) = pass.finish();
    Ok(DiversityState::new(chosen, trace, m.n()))
}

/// How successive elimination picks the next seed from the surviving pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EliminationRule {
    Random,
    /// Largest V(i) = Span(Proximity(i)).
    SpanMax,
    SpanMin,
    /// V(i) closest to the mean V over the pool.
    SpanMean,
}

/// Seed selection by successive elimination: pick a point, remove it plus
/// its proximity set, repeat. Proximity is the ceil(n_o / k_o) nearest
/// survivors (k_o = picks remaining), or everything within the running
/// threshold U in `u_mode`. `iterate` re-runs once, pre-seeding with the
/// final pick. A pool exhausted before k picks yields a short H_o with
/// `k_too_large` set.
pub fn successive_elimination(
    m: &DistanceMatrix,
    k: usize,
    rule: EliminationRule,
    measure: MeasureKind,
    iterate: bool,
    u_mode: bool,
    rng_seed: u64,
) -> Result<DiversityState> {
    if k < 1 || k > m.n() {
        return Err(Error::BadK { k, n: m.n() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut u_threshold: Option<f64> = None;
    let (mut chosen, mut exhausted) =
        elimination_pass(m, k, rule, measure, u_mode, None, &mut u_threshold, &mut rng);
    let mut passes = 1;
    if iterate && !exhausted {
        let forced = *chosen.last().unwrap();
        let (second, ex2) = elimination_pass(
            m,
            k,
            rule,
            measure,
            u_mode,
            Some(forced),
            &mut u_threshold,
            &mut rng,
        );
        chosen = second;
        exhausted = ex2;
        passes = 2;
    }
    let trace = mind_trace_of(m, &chosen);
    let mut state = DiversityState::new(chosen, trace, m.n());
    state.passes = passes;
    state.k_too_large = exhausted;
    Ok(state)
}

#[allow(clippy::too_many_arguments)]
fn elimination_pass(
    m: &DistanceMatrix,
    k: usize,
    rule: EliminationRule,
    measure: MeasureKind,
    u_mode: bool,
    forced_first: Option<usize>,
    u_threshold: &mut Option<f64>,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, bool) {
    let n = m.n();
    let mut avail = vec![true; n];
    let mut n_o = n;
    let mut chosen = Vec::with_capacity(k);
    for step in 0..k {
        if n_o == 0 {
            return (chosen, true);
        }
        let k_rem = k - step;
        let proximity = |i: usize| -> Vec<usize> {
            match (u_mode, *u_threshold) {
                (true, Some(u)) => (0..n)
                    .filter(|&j| avail[j] && j != i && m.at(i, j) <= u)
                    .collect(),
                _ => {
                    let size = n_o.div_ceil(k_rem).min(n_o - 1);
                    let mut near: Vec<(f64, usize)> = (0..n)
                        .filter(|&j| avail[j] && j != i)
                        .map(|j| (m.at(i, j), j))
                        .collect();
                    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    near.truncate(size);
                    near.into_iter().map(|(_, j)| j).collect()
                }
            }
        };
        let pick = if let (0, Some(f)) = (step, forced_first) {
            f
        } else {
            match rule {
                EliminationRule::Random => {
                    let pool: Vec<usize> = (0..n).filter(|&i| avail[i]).collect();
                    pool[rng.random_range(0..pool.len())]
                }
                _ => {
                    let values: Vec<(usize, f64)> = (0..n)
                        .filter(|&i| avail[i])
                        .map(|i| {
                            let prox = proximity(i);
                            let v = if prox.is_empty() {
                                0.0
                            } else {
                                pseudo_centroid(measure, &prox, m).expect("non-empty").span
                            };
                            (i, v)
                        })
                        .collect();
                    choose_by_rule(&values, rule)
                }
            }
        };
        let prox = proximity(pick);
        if u_mode && !prox.is_empty() {
            let mean = prox.iter().map(|&j| m.at(pick, j)).sum::<f64>() / prox.len() as f64;
            *u_threshold = Some(mean);
        }
        avail[pick] = false;
        n_o -= 1;
        for &j in &prox {
            avail[j] = false;
            n_o -= 1;
        }
        chosen.push(pick);
    }
    (chosen, false)
}

fn choose_by_rule(values: &[(usize, f64)], rule: EliminationRule) -> usize {
    match rule {
        EliminationRule::SpanMax => {
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for &(i, v) in values {
                if v > best.0 {
                    best = (v, i);
                }
            }
            best.1
        }
        EliminationRule::SpanMin => {
            let mut best = (f64::INFINITY, usize::MAX);
            for &(i, v) in values {
                if v < best.0 {
                    best = (v, i);
                }
            }
            best.1
        }
        EliminationRule::SpanMean => {
            let mean = values.iter().map(|&(_, v)| v).sum::<f64>() / values.len() as f64;
            let mut best = (f64::INFINITY, usize::MAX);
            for &(i, v) in values {
                let dev = (v - mean).abs();
                if dev < best.0 {
                    best = (dev, i);
                }
            }
            best.1
        }
        EliminationRule::Random => unreachable!("handled by the caller"),
    }
}

fn mind_trace_of(m: &DistanceMatrix, chosen: &[usize]) -> Vec<f64> {
    (1..chosen.len())
        .map(|t| {
            chosen[..t]
                .iter()
                .map(|&j| m.at(chosen[t], j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Flags the k_o positions where the MinD trace drops by more than
/// `min_gap_threshold` from its predecessor, or falls below `floor`.
/// Advisory output for choosing k.
pub fn mind_trace_report(
    state: &DiversityState,
    min_gap_threshold: f64,
    floor: Option<f64>,
) -> Vec<usize> {
    let mut flagged = Vec::new();
    for (t, &v) in state.mind_trace.iter().enumerate() {
        let k_o = t + 2;
        let dropped = t > 0 && state.mind_trace[t - 1] - v > min_gap_threshold;
        let under_floor = floor.is_some_and(|f| v < f);
        if dropped || under_floor {
            flagged.push(k_o);
        }
    }
    flagged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{Metric, DEFAULT_SYM_TOL};
    use rand::{Rng, SeedableRng};

    fn m4() -> DistanceMatrix {
        DistanceMatrix::from_points(
            &[vec![0.0], vec![1.0], vec![3.0], vec![7.0]],
            Metric::Euclidean,
        )
        .unwrap()
    }

    fn random_integer_matrix(rng: &mut impl Rng, n: usize, hi: i64) -> DistanceMatrix {
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = rng.random_range(1..=hi) as f64;
                rows[i][j] = d;
                rows[j][i] = d;
            }
        }
        DistanceMatrix::from_rows(rows, DEFAULT_SYM_TOL).unwrap()
    }

    fn assert_partition(state: &DiversityState, n: usize) {
        let mut seen = vec![false; n];
        for &i in state.chosen.iter().chain(&state.remaining) {
            assert!(!seen[i]);
            seen[i] = true;
        }
        assert!(seen.into_iter().all(|x| x));
    }

    #[test]
    fn simple_on_m4_k2() {
        let s = simple_diversity(&m4(), 2, 0).unwrap();
        assert_eq!(s.chosen, vec![0, 3]);
        assert_eq!(s.mind_trace, vec![7.0]);
    }

    #[test]
    fn simple_on_m4_k3() {
        let s = simple_diversity(&m4(), 3, 0).unwrap();
        assert_eq!(s.chosen, vec![0, 3, 2]);
        assert_eq!(s.mind_trace, vec![7.0, 3.0]);
        assert_partition(&s, 4);
    }

    #[test]
    fn simple_k1_is_just_the_seed() {
        let s = simple_diversity(&m4(), 1, 2).unwrap();
        assert_eq!(s.chosen, vec![2]);
        assert!(s.mind_trace.is_empty());
    }

    #[test]
    fn simple_trace_is_non_increasing() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.random_range(2..=14usize);
            let k = rng.random_range(1..=n);
            let m = random_integer_matrix(&mut rng, n, 40);
            let s = simple_diversity(&m, k, 0).unwrap();
            for w in s.mind_trace.windows(2) {
                assert!(w[0] >= w[1]);
            }
            assert_partition(&s, n);
        }
    }

    #[test]
    fn refined_on_m4_returns_first_pass() {
        // Pass 1 from seed 0 reaches MaxMin 7; pass 2 from seed 3 ties at 7,
        // so the first pass's H_o is recovered.
        let s = refined_diversity(&m4(), 2, 0, RestartPick::Last, 10).unwrap();
        assert_eq!(s.chosen, vec![0, 3]);
        assert_eq!(s.passes, 2);
        assert_eq!(s.pass_maxmins, vec![7.0, 7.0]);
    }

    #[test]
    fn refined_beats_or_ties_simple() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let n = rng.random_range(3..=12usize);
            let k = rng.random_range(2..=n);
            let m = random_integer_matrix(&mut rng, n, 40);
            let simple = simple_diversity(&m, k, 0).unwrap();
            let refined = refined_diversity(&m, k, 0, RestartPick::Last, 10).unwrap();
            assert!(refined.mind_trace.last().unwrap() >= simple.mind_trace.last().unwrap());
            // Strictly increasing until the final rejected pass, and the
            // returned H_o attains the recorded maximum.
            let mm = &refined.pass_maxmins;
            for w in mm[..mm.len().saturating_sub(1)].windows(2) {
                assert!(w[1] > w[0]);
            }
            let best = mm.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            assert_eq!(*refined.mind_trace.last().unwrap(), best);
            assert_partition(&refined, n);
        }
    }

    #[test]
    fn compound_equals_two_stage_replay() {
        // Independent replay of the two-stage rule on M4 with k=3, k_check=2.
        let m = m4();
        let s = compound_diversity(&m, 3, 2, 0, 10).unwrap();
        // Stage 1 (size 2): passes (0,3) then (3,0), both MaxMin 7 -> (0,3).
        // Stage 2 extends to (0,3,2) with MinD 3; rebuild from seed 2 gives
        // (2,3) wait - full rebuild picks maxmin from 2: MinD(j)=d(j,2):
        // (3,2,4) -> i(2)=3, then i(3)=0 -> (2,3,0) trace (4,3); final
        // MinD=3 not an improvement over 3 -> keep (0,3,2).
        assert_eq!(s.chosen, vec![0, 3, 2]);
        assert_eq!(s.mind_trace, vec![7.0, 3.0]);
        assert_partition(&s, 4);
    }

    #[test]
    fn compound_structural_checks_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let n = rng.random_range(4..=14usize);
            let k = rng.random_range(3..=n.min(6));
            let k_check = rng.random_range(2..k);
            let m = random_integer_matrix(&mut rng, n, 40);
            let s = compound_diversity(&m, k, k_check, 0, 10).unwrap();
            assert_eq!(s.chosen.len(), k);
            assert_eq!(s.mind_trace.len(), k - 1);
            assert_partition(&s, n);
        }
    }

    #[test]
    fn compound_rejects_bad_k_check() {
        assert!(matches!(
            compound_diversity(&m4(), 3, 3, 0, 10).unwrap_err(),
            Error::BadKCheck { .. }
        ));
        assert!(matches!(
            compound_diversity(&m4(), 3, 1, 0, 10).unwrap_err(),
            Error::BadKCheck { .. }
        ));
    }

    #[test]
    fn compound_on_equidistant_matrix_stops_quickly() {
        let n = 6;
        let mut rows = vec![vec![1.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        let m = DistanceMatrix::from_rows(rows, DEFAULT_SYM_TOL).unwrap();
        let s = compound_diversity(&m, 4, 3, 0, 10).unwrap();
        assert_eq!(s.chosen.len(), 4);
        // Two passes per stage: the improvement test ties immediately.
        assert_eq!(s.passes, 4);
    }

    #[test]
    fn huge_target_degenerates_to_maxmin() {
        let spec = TargetSpec::new(1e12);
        let t = targeted_simple(&m4(), 3, &spec, 0).unwrap();
        let s = simple_diversity(&m4(), 3, 0).unwrap();
        assert_eq!(t.chosen, s.chosen);
    }

    #[test]
    fn zero_target_picks_closest() {
        let spec = TargetSpec::new(0.0);
        let t = targeted_simple(&m4(), 3, &spec, 0).unwrap();
        // Deviation = MinD: picks 1 (MinD 1), then 2 (MinD 2).
        assert_eq!(t.chosen, vec![0, 1, 2]);
    }

    #[test]
    fn targeted_on_m4_with_t3() {
        let spec = TargetSpec::new(3.0);
        let t = targeted_simple(&m4(), 3, &spec, 0).unwrap();
        // Deviations at step 2: |1-3|, |3-3|, |7-3| -> picks 2; at step 3:
        // MinD(1)=1 (dev 2), MinD(3)=4 (dev 1) -> picks 3.
        assert_eq!(t.chosen, vec![0, 2, 3]);
    }

    #[test]
    fn mean_mind_seed_on_simple_m4_prior() {
        let prior = simple_diversity(&m4(), 3, 0).unwrap();
        // H_o = (0,3,2): within-set MinD values are 3, 4, 3.
        let (t, i_sharp) = mean_mind_seed(&m4(), &prior.chosen);
        assert!((t - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(i_sharp, 0);
    }

    #[test]
    fn tiebreak_with_zero_slack_reduces_to_targeted() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(43);
        for _ in 0..100 {
            let n = rng.random_range(4..=12usize);
            let k = rng.random_range(2..=n.min(5));
            let m = random_integer_matrix(&mut rng, n, 40);
            let prior = simple_diversity(&m, k, 0).unwrap();
            let spec = TargetSpec {
                t: 0.0,
                t0: 0.0,
                f: 0.0,
                t_rule: TargetRule::Mean,
            };
            let s = targeted_tiebreak(&m, k, &spec, &prior, CompactRule::MaxD).unwrap();
            // Replay: zero slack restricts the band to exact deviation
            // minimizers; the chosen point must be one of them.
            let (t, i_sharp) = mean_mind_seed(&m, &prior.chosen);
            assert_eq!(s.chosen[0], i_sharp);
            let mut h = vec![s.chosen[0]];
            for &pick in &s.chosen[1..] {
                let mind = |i: usize| -> f64 {
                    h.iter().map(|&j| m.at(i, j)).fold(f64::INFINITY, f64::min)
                };
                let min_dev = (0..n)
                    .filter(|i| !h.contains(i))
                    .map(|i| (mind(i) - t).abs())
                    .fold(f64::INFINITY, f64::min);
                assert_eq!((mind(pick) - t).abs(), min_dev);
                h.push(pick);
            }
            assert_partition(&s, n);
        }
    }

    #[test]
    fn tiebreak_band_membership_holds_each_step() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(47);
        for _ in 0..100 {
            let n = rng.random_range(4..=12usize);
            let k = rng.random_range(2..=n.min(5));
            let m = random_integer_matrix(&mut rng, n, 40);
            let prior = simple_diversity(&m, k, 0).unwrap();
            let spec = TargetSpec {
                t: 0.0,
                t0: 0.0,
                f: 0.1,
                t_rule: TargetRule::Mean,
            };
            let s = targeted_tiebreak(&m, k, &spec, &prior, CompactRule::SumD).unwrap();
            let (t, _) = mean_mind_seed(&m, &prior.chosen);
            let slack = 0.1 * t;
            let mut h = vec![s.chosen[0]];
            for &pick in &s.chosen[1..] {
                let mind = |i: usize| -> f64 {
                    h.iter().map(|&j| m.at(i, j)).fold(f64::INFINITY, f64::min)
                };
                let min_dev = (0..n)
                    .filter(|i| !h.contains(i))
                    .map(|i| (mind(i) - t).abs())
                    .fold(f64::INFINITY, f64::min);
                assert!((mind(pick) - t).abs() <= min_dev + slack + 1e-9);
                h.push(pick);
            }
        }
    }

    #[test]
    fn compact_zero_slack_always_picks_a_maxmin_point() {
        // t0 = 0 restricts each step to the exact max-min band, so the
        // selection matches the simple method up to its tie-breaking rule.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(53);
        for _ in 0..100 {
            let n = rng.random_range(3..=12usize);
            let k = rng.random_range(2..=n);
            let m = random_integer_matrix(&mut rng, n, 40);
            let c = compact_maxmin(&m, k, 0.0, 0, CompactRule::MaxD).unwrap();
            let mut h = vec![c.chosen[0]];
            for &pick in &c.chosen[1..] {
                let mind = |i: usize| -> f64 {
                    h.iter().map(|&j| m.at(i, j)).fold(f64::INFINITY, f64::min)
                };
                let maxmin = (0..n)
                    .filter(|i| !h.contains(i))
                    .map(&mind)
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(mind(pick), maxmin);
                h.push(pick);
            }
        }
    }

    #[test]
    fn compact_band_membership_holds_each_step() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(59);
        for _ in 0..100 {
            let n = rng.random_range(3..=12usize);
            let k = rng.random_range(2..=n);
            let m = random_integer_matrix(&mut rng, n, 40);
            let t0 = rng.random_range(0..=3) as f64;
            let s = compact_maxmin(&m, k, t0, 0, CompactRule::SumD).unwrap();
            let mut h = vec![s.chosen[0]];
            for &pick in &s.chosen[1..] {
                let mind = |i: usize| -> f64 {
                    h.iter().map(|&j| m.at(i, j)).fold(f64::INFINITY, f64::min)
                };
                let maxmin = (0..n)
                    .filter(|i| !h.contains(i))
                    .map(&mind)
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(mind(pick) >= maxmin - t0);
                h.push(pick);
            }
        }
    }

    #[test]
    fn compact_on_equidistant_matrix_uses_index_order() {
        let n = 5;
        let mut rows = vec![vec![3.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        let m = DistanceMatrix::from_rows(rows, DEFAULT_SYM_TOL).unwrap();
        let s = compact_maxmin(&m, 3, 1.0, 0, CompactRule::MaxD).unwrap();
        assert_eq!(s.chosen, vec![0, 1, 2]);
    }

    #[test]
    fn elimination_k1_takes_everything() {
        let s = successive_elimination(
            &m4(),
            1,
            EliminationRule::SpanMax,
            MeasureKind::MinMax,
            false,
            false,
            0,
        )
        .unwrap();
        assert_eq!(s.chosen.len(), 1);
        assert!(!s.k_too_large);
    }

    #[test]
    fn elimination_step_replay_on_m4() {
        // k=2, span_max, MinMax, proximity size ceil(4/2)=2 at step one.
        let m = m4();
        let s = successive_elimination(
            &m,
            2,
            EliminationRule::SpanMax,
            MeasureKind::MinMax,
            false,
            false,
            0,
        )
        .unwrap();
        // Independent replay.
        let mut avail = vec![true; 4];
        let mut n_o = 4;
        let mut expect = Vec::new();
        for step in 0..2 {
            if n_o == 0 {
                break;
            }
            let k_rem = 2 - step;
            let size = n_o.div_ceil(k_rem).min(n_o.saturating_sub(1));
            let prox = |i: usize| {
                let mut near: Vec<(f64, usize)> = (0..4)
                    .filter(|&j| avail[j] && j != i)
                    .map(|j| (m.at(i, j), j))
                    .collect();
                near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                near.truncate(size);
                near.into_iter().map(|(_, j)| j).collect::<Vec<_>>()
            };
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for i in (0..4).filter(|&i| avail[i]) {
                let p = prox(i);
                let v = if p.is_empty() {
                    0.0
                } else {
                    pseudo_centroid(MeasureKind::MinMax, &p, &m).unwrap().span
                };
                if v > best.0 {
                    best = (v, i);
                }
            }
            let p = prox(best.1);
            avail[best.1] = false;
            n_o -= 1;
            for j in p {
                avail[j] = false;
                n_o -= 1;
            }
            expect.push(best.1);
        }
        assert_eq!(s.chosen, expect);
    }

    #[test]
    fn elimination_random_rule_is_seed_deterministic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(61);
        let m = random_integer_matrix(&mut rng, 10, 30);
        let a = successive_elimination(
            &m,
            3,
            EliminationRule::Random,
            MeasureKind::MinMax,
            true,
            false,
            123,
        )
        .unwrap();
        let b = successive_elimination(
            &m,
            3,
            EliminationRule::Random,
            MeasureKind::MinMax,
            true,
            false,
            123,
        )
        .unwrap();
        assert_eq!(a.chosen, b.chosen);
    }

    #[test]
    fn elimination_removal_counts_match_the_rule() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(67);
        for _ in 0..50 {
            let n = rng.random_range(3..=14usize);
            let k = rng.random_range(1..=n.min(5));
            let m = random_integer_matrix(&mut rng, n, 40);
            let s = successive_elimination(
                &m,
                k,
                EliminationRule::SpanMin,
                MeasureKind::MinSum,
                false,
                false,
                0,
            )
            .unwrap();
            // Replay only the removal arithmetic.
            let mut n_o = n;
            let mut picks = 0;
            for step in 0..k {
                if n_o == 0 {
                    break;
                }
                let k_rem = k - step;
                let removed = (n_o.div_ceil(k_rem).min(n_o - 1)) + 1;
                n_o -= removed.min(n_o);
                picks += 1;
            }
            assert_eq!(s.chosen.len(), picks);
            assert_eq!(s.k_too_large, picks < k);
        }
    }

    #[test]
    fn u_mode_can_signal_k_too_large() {
        // One far-away point; U collapses proximity to near-neighbors only,
        // but a tight cluster plus large k exhausts the pool.
        let m = DistanceMatrix::from_points(
            &[vec![0.0], vec![0.1], vec![0.2], vec![0.3]],
            Metric::Euclidean,
        )
        .unwrap();
        let s = successive_elimination(
            &m,
            4,
            EliminationRule::SpanMax,
            MeasureKind::MinMax,
            false,
            true,
            0,
        )
        .unwrap();
        assert!(s.chosen.len() <= 4);
        assert_eq!(s.k_too_large, s.chosen.len() < 4);
    }

    #[test]
    fn trace_report_flags_abrupt_drop() {
        let mut state = DiversityState::new(vec![0, 3, 2], vec![7.0, 3.0], 4);
        assert_eq!(mind_trace_report(&state, 3.0, None), vec![3]);
        state.mind_trace = vec![5.0, 5.0, 5.0];
        assert!(mind_trace_report(&state, 3.0, None).is_empty());
        state.mind_trace = vec![5.0, 4.0];
        assert_eq!(mind_trace_report(&state, 10.0, Some(4.5)), vec![3]);
    }

    #[test]
    fn trace_report_matches_simple_run_example() {
        let s = simple_diversity(&m4(), 3, 0).unwrap();
        assert_eq!(s.mind_trace, vec![7.0, 3.0]);
        assert_eq!(mind_trace_report(&s, 3.0, None), vec![3]);
    }
}
