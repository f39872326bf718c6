//! Independent certification of the intensity-based constructions.
//!
//! `reference_adaptive` re-derives the adaptive methods from their
//! definitions with plain per-step sorts and explicit counting, sharing no
//! scanning machinery (neighbor orderings, availability flags, resume
//! markers) with the production path. The suite runners pit the production
//! code against it, and against exhaustive subset enumeration, on batches
//! of random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::intensity::{
    adaptive_minmax, adaptive_minsum, brute_force_best_cluster, primary_minmax, primary_minsum,
    AdaptiveOptions, IntensityState, MaxSizeRule, StartCluster,
};
use crate::matrix::{DistanceMatrix, DEFAULT_SYM_TOL};
use crate::measure::MeasureKind;
use crate::order::NeighborOrder;

/// Random symmetric matrix with integer entries in [lo, hi].
pub fn random_symmetric_integer_matrix(
    rng: &mut ChaCha8Rng,
    n: usize,
    lo: i64,
    hi: i64,
) -> DistanceMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = rng.random_range(lo..=hi) as f64;
            rows[i][j] = d;
            rows[j][i] = d;
        }
    }
    DistanceMatrix::from_rows(rows, DEFAULT_SYM_TOL).unwrap()
}

/// Reference reimplementation of the adaptive constructions. Sorts the
/// surviving pool per anchor per step and applies the documented limits
/// and selection priorities directly.
pub fn reference_adaptive(
    m: &DistanceMatrix,
    k: usize,
    kind: MeasureKind,
    opts: &AdaptiveOptions,
) -> Result<IntensityState> {
    opts.validate()?;
    let n = m.n();
    if k < 1 || k > n {
        return Err(Error::BadK { k, n });
    }
    let mut pool: Vec<usize> = (0..n).collect();
    let mut clusters = Vec::with_capacity(k);
    for idx in 0..k {
        let k_o = k - idx;
        if pool.is_empty() {
            return Ok(IntensityState {
                reduced_k: Some(clusters.len()),
                clusters,
                remaining: Vec::new(),
            });
        }
        let n_o = pool.len();
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
        if min_size == 1 {
            let anchor = pool[0];
            pool.remove(0);
            clusters.push(StartCluster {
                k_o,
                members: vec![anchor],
                centroid: anchor,
                span: 0.0,
            });
            continue;
        }
        let min_scan = min_size - 1;
        let max_scan = max_size - 1;

        // Ascending (distance, index) neighbor lists within the pool.
        let lists: Vec<Vec<(f64, usize)>> = pool
            .iter()
            .map(|&i| {
                let mut ds: Vec<(f64, usize)> = pool
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (m.at(i, j), j))
                    .collect();
                ds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                ds
            })
            .collect();

        // Phase 1 over the first MinScan neighbors of each anchor.
        let mut best: Option<(f64, f64, f64, f64)> = None; // (sum, distance, min_gap, sum_gap)
        for ds in &lists {
            let firsts = &ds[..min_scan];
            let distance = firsts[min_scan - 1].0;
            let sum: f64 = firsts.iter().map(|e| e.0).sum();
            let min_gap = if min_scan < 2 {
                f64::INFINITY
            } else {
                firsts
                    .windows(2)
                    .map(|w| w[1].0 - w[0].0)
                    .fold(f64::INFINITY, f64::min)
            };
            let sum_gap = distance - firsts[0].0;
            let better = match (&best, kind) {
                (None, _) => true,
                (Some((_, bd, bg, _)), MeasureKind::MinMax) => {
                    distance < *bd || (distance == *bd && min_gap > *bg)
                }
                (Some((bs, bd, bg, _)), MeasureKind::MinSum) => {
                    sum < *bs
                        || (sum == *bs && distance < *bd)
                        || (sum == *bs && distance == *bd && min_gap > *bg)
                }
            };
            if better {
                best = Some((sum, distance, min_gap, sum_gap));
            }
        }
        let (best_sum, best_distance, best_min_gap, best_sum_gap) = best.unwrap();
        let target_gap = if min_scan < 2 {
            0.0
        } else {
            opts.lambda * (best_sum_gap / (min_scan - 1) as f64)
                + (1.0 - opts.lambda) * best_min_gap
        };
        let distance_limit = best_distance + target_gap;
        let first_sum_limit = best_sum + target_gap;
        let delta_sum = distance_limit;

        // Phase 2: admissible scan per anchor, then (scan, value) selection.
        let mut winner: Option<(usize, usize, f64)> = None; // (anchor, scan, value)
        for (p, ds) in lists.iter().enumerate() {
            let (scan, value) = match kind {
                MeasureKind::MinMax => {
                    let mut scan = 0;
                    while scan < max_scan && ds[scan].0 <= distance_limit {
                        scan += 1;
                    }
                    let value = if scan > 0 { ds[scan - 1].0 } else { f64::INFINITY };
                    (scan, value)
                }
                MeasureKind::MinSum => {
                    let mut sum: f64 = ds[..min_scan].iter().map(|e| e.0).sum();
                    if sum > first_sum_limit {
                        (min_scan - 1, f64::INFINITY)
                    } else {
                        let mut scan = min_scan;
                        let mut limit = first_sum_limit;
                        while scan < max_scan && sum + ds[scan].0 <= limit + delta_sum {
                            sum += ds[scan].0;
                            limit += delta_sum;
                            scan += 1;
                        }
                        (scan, sum)
                    }
                }
            };
            if scan < min_scan {
                continue;
            }
            let anchor = pool[p];
            let better = match winner {
                None => true,
                Some((_, ws, wv)) => scan > ws || (scan == ws && value < wv),
            };
            if better {
                winner = Some((anchor, scan, value));
            }
        }
        let (anchor, scan, value) = winner.expect("the phase-1 winner always qualifies");
        let p = pool.iter().position(|&x| x == anchor).unwrap();
        let mut members: Vec<usize> = lists[p][..scan].iter().map(|e| e.1).collect();
        members.push(anchor);
        members.sort_unstable();
        pool.retain(|x| !members.contains(x));
        clusters.push(StartCluster {
            k_o,
            members,
            centroid: anchor,
            span: value,
        });
    }
    Ok(IntensityState {
        clusters,
        remaining: pool,
        reduced_k: None,
    })
}

/// Outcome of a randomized certification batch.
#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub trials: usize,
    pub passes: usize,
    pub failures: Vec<String>,
}

impl SuiteOutcome {
    pub fn all_passed(&self) -> bool {
        self.passes == self.trials
    }
}

/// Upper bound on instance size accepted by the suites; keeps the subset
/// enumeration below the blowup guard.
pub const MAX_ORACLE_N: usize = 22;

/// Certifies that every cluster emitted by the primary constructions has a
/// span equal to the exhaustive best over same-size subsets of the pool it
/// was drawn from.
pub fn theorem1_suite(trials: usize, max_n: usize, seed: u64) -> Result<SuiteOutcome> {
    if max_n > MAX_ORACLE_N {
        return Err(Error::CombinatorialBlowup {
            n: max_n,
            v: max_n / 2,
            limit: 1_000_000,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut passes = 0;
    for trial in 0..trials {
        let n = rng.random_range(6..=max_n.max(6));
        let k = rng.random_range(2..=4usize).min(n);
        let m = random_symmetric_integer_matrix(&mut rng, n, 1, 100);
        let order = NeighborOrder::build(&m).unwrap();
        let mut ok = true;
        for kind in [MeasureKind::MinMax, MeasureKind::MinSum] {
            let state = match kind {
                MeasureKind::MinMax => primary_minmax(&m, &order, k),
                MeasureKind::MinSum => primary_minsum(&m, &order, k),
            }
            .expect("valid instance");
            let mut pool: Vec<usize> = (0..n).collect();
            for c in &state.clusters {
                let (_, _, span) = brute_force_best_cluster(&m, &pool, c.members.len(), kind)?;
                if span != c.span {
                    ok = false;
                    failures.push(format!(
                        "trial {trial}: {kind:?} k_o {} span {} != exhaustive {span}",
                        c.k_o, c.span
                    ));
                }
                pool.retain(|p| !c.members.contains(p));
            }
        }
        if ok {
            passes += 1;
        }
    }
    Ok(SuiteOutcome {
        trials,
        passes,
        failures,
    })
}

/// Certifies the adaptive constructions against `reference_adaptive` on
/// every emitted (v*, anchor, span) for lambda in {0, 0.3, 1} and both
/// MaxSize rules.
pub fn theorem2_suite(trials: usize, max_n: usize, seed: u64) -> Result<SuiteOutcome> {
    if max_n > MAX_ORACLE_N {
        return Err(Error::CombinatorialBlowup {
            n: max_n,
            v: max_n / 2,
            limit: 1_000_000,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambdas = [0.0, 0.3, 1.0];
    let mut failures = Vec::new();
    let mut passes = 0;
    for trial in 0..trials {
        let n = rng.random_range(6..=max_n.max(6));
        let k = rng.random_range(1..=3usize).min(n / 2);
        let k = k.max(1);
        let m = random_symmetric_integer_matrix(&mut rng, n, 1, 100);
        let order = NeighborOrder::build(&m).unwrap();
        let lambda = lambdas[trial % lambdas.len()];
        let mut ok = true;
        for kind in [MeasureKind::MinMax, MeasureKind::MinSum] {
            for rule in [MaxSizeRule::PerText, MaxSizeRule::PerPseudocode] {
                let opts = AdaptiveOptions {
                    lambda,
                    max_size_rule: rule,
                    ..AdaptiveOptions::default()
                };
                let got = match kind {
                    MeasureKind::MinMax => adaptive_minmax(&m, &order, k, &opts),
                    MeasureKind::MinSum => adaptive_minsum(&m, &order, k, &opts),
                };
                let want = reference_adaptive(&m, k, kind, &opts);
                match (got, want) {
                    (Ok(a), Ok(b)) => {
                        if a.clusters != b.clusters || a.reduced_k != b.reduced_k {
                            ok = false;
                            failures.push(format!(
                                "trial {trial}: {kind:?} {rule:?} lambda {lambda} diverged"
                            ));
                        }
                    }
                    (
                        Err(Error::InfeasibleBounds { k_o: a, .. }),
                        Err(Error::InfeasibleBounds { k_o: b, .. }),
                    ) => {
                        if a != b {
                            ok = false;
                            failures.push(format!(
                                "trial {trial}: infeasibility at different k_o ({a} vs {b})"
                            ));
                        }
                    }
                    (got, want) => {
                        ok = false;
                        failures.push(format!(
                            "trial {trial}: {kind:?} {rule:?} outcome mismatch: {:?} vs {:?}",
                            got.map(|s| s.clusters.len()),
                            want.map(|s| s.clusters.len()),
                        ));
                    }
                }
            }
        }
        if ok {
            passes += 1;
        }
    }
    Ok(SuiteOutcome {
        trials,
        passes,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_matches_production_on_a_batch() {
        let out = theorem2_suite(40, 12, 7).unwrap();
        assert!(out.all_passed(), "{:?}", out.failures);
    }

    #[test]
    fn theorem1_smoke_batch() {
        let out = theorem1_suite(25, 10, 3).unwrap();
        assert!(out.all_passed(), "{:?}", out.failures);
    }

    #[test]
    fn oversized_bound_is_rejected() {
        assert!(matches!(
            theorem1_suite(1, 40, 0).unwrap_err(),
            Error::CombinatorialBlowup { .. }
        ));
    }

    #[test]
    fn zero_trials_pass_vacuously() {
        let out = theorem2_suite(0, 12, 0).unwrap();
        assert!(out.all_passed());
        assert_eq!(out.trials, 0);
    }
}
