//! Declarative selection of a starting method, resolved against a matrix
//! into either seed centroids (diversity methods) or ready-made clusters
//! (intensity methods).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diversity::{
    compact_maxmin, compound_diversity, refined_diversity, simple_diversity,
    successive_elimination, targeted_simple, targeted_tiebreak, CompactRule, DiversityState,
    EliminationRule, RestartPick, TargetRule, TargetSpec,
};
use crate::error::{Error, Result};
use crate::intensity::{
    adaptive_minmax, adaptive_minsum, cluster_size_refinement, primary_minmax, primary_minsum,
    AdaptiveOptions, IntensityState, MaxSizeRule, RefinementApproach,
};
use crate::matrix::DistanceMatrix;
use crate::measure::MeasureKind;
use crate::order::NeighborOrder;

/// First point of a diversity construction: a fixed index or one drawn
/// from the run's seeded RNG.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPoint {
    Index(usize),
    Random,
}

impl Default for SeedPoint {
    fn default() -> Self {
        SeedPoint::Index(0)
    }
}

impl SeedPoint {
    fn resolve(self, n: usize, rng: &mut ChaCha8Rng) -> usize {
        match self {
            SeedPoint::Index(i) => i,
            SeedPoint::Random => rng.random_range(0..n),
        }
    }
}

/// The catalog of starting methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum StartSpec {
    Simple {
        seed_point: SeedPoint,
    },
    Refined {
        seed_point: SeedPoint,
        restart_pick: RestartPick,
        max_restarts: usize,
    },
    Compound {
        seed_point: SeedPoint,
        k_check: usize,
        max_restarts: usize,
    },
    /// Targeted selection; without an explicit `t`, the target is derived
    /// from a simple run's MinD trace by `t_rule`.
    Targeted {
        seed_point: SeedPoint,
        t: Option<f64>,
        t_rule: TargetRule,
        t0: f64,
        f: f64,
    },
    /// Targeted with the compactness tie-break; target and first point are
    /// derived from a prior simple run.
    TargetedTiebreak {
        seed_point: SeedPoint,
        t_rule: TargetRule,
        t0: f64,
        f: f64,
        compact_rule: CompactRule,
    },
    Compact {
        seed_point: SeedPoint,
        t0: f64,
        compact_rule: CompactRule,
    },
    Elimination {
        rule: EliminationRule,
        iterate: bool,
        u_mode: bool,
    },
    Primary,
    Adaptive {
        lambda: f64,
        global_min_size: usize,
        max_size_rule: MaxSizeRule,
        allow_absorb: bool,
    },
    Refinement {
        approach: RefinementApproach,
        interrupt_at: Option<usize>,
    },
    Explicit {
        centroids: Vec<usize>,
    },
}

impl Default for StartSpec {
    fn default() -> Self {
        StartSpec::Simple {
            seed_point: SeedPoint::default(),
        }
    }
}

/// What a resolved start hands to the engine.
#[derive(Clone, Debug)]
pub enum StartOutcome {
    Centroids(Vec<usize>),
    Clusters(IntensityState),
}

/// Resolves a start specification. Diversity methods yield seed points;
/// intensity methods yield clusters that enter the engine at Step 2.
/// Returns the diversity state alongside when one was built.
pub fn resolve_start(
    spec: &StartSpec,
    measure: MeasureKind,
    m: &DistanceMatrix,
    order: &NeighborOrder,
    k: usize,
    rng_seed: u64,
) -> Result<(StartOutcome, Option<DiversityState>)> {
    let n = m.n();
    if k < 1 || k > n {
        return Err(Error::BadK { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    match spec {
        StartSpec::Simple { seed_point } => {
            let s = simple_diversity(m, k, seed_point.resolve(n, &mut rng))?;
            Ok((StartOutcome::Centroids(s.chosen.clone()), Some(s)))
        }
        StartSpec::Refined {
            seed_point,
            restart_pick,
            max_restarts,
        } => {
            let s = refined_diversity(
                m,
                k,
                seed_point.resolve(n, &mut rng),
                *restart_pick,
                *max_restarts,
            )?;
            Ok((StartOutcome::Centroids(s.chosen.clone()), Some(s)))
        }
        StartSpec::Compound {
            seed_point,
            k_check,
            max_restarts,
        } => {
            let s = compound_diversity(
                m,
                k,
                *k_check,
                seed_point.resolve(n, &mut rng),
                *max_restarts,
            )?;
            Ok((StartOutcome::Centroids(s.chosen.clone()), Some(s)))
        }
        StartSpec::Targeted {
            seed_point,
            t,
            t_rule,
            t0,
            f,
        } => {
            let seed = seed_point.resolve(n, &mut rng);
            let spec = match t {
                Some(t) => TargetSpec {
                    t: *t,
                    t0: *t0,
                    f: *f,
                    t_rule: *t_rule,
                },
                None => {
                    let prior = simple_diversity(m, k, seed)?;
                    TargetSpec::from_prior(&prior, *t_rule, *t0, *f)
                }
            };
            let s = targeted_simple(m, k, &spec, seed)?;
            Ok((StartOutcome::Centroids(s.chosen.clone()), Some(s)))
        }
        StartSpec::TargetedTiebreak {
            seed_point,
            t_rule,
            t0,
            f,
            compact_rule,
        } => {
            let prior = simple_diversity(m, k, seed_point.resolve(n, &mut rng))?;
            let spec = TargetSpec::from_prior(&prior, *t_rule, *t0, *f);
            let s = targeted_tiebreak(m, k, &spec, &prior, *compact_rule)?;
            Ok((StartOutcome::Centroids(s.chosen.clone()), Some(s)))
        }
        StartSpec::Compact {
            seed_point,
            t0,
            compact_rule,
        } => {
            let s = compact_maxmin(m, k, *t0, seed_point.resolve(n, &mut rng), *compact_rule)?;
            Ok((StartOutcome::Centroids(s.chosen.clone()), Some(s)))
        }
        StartSpec::Elimination {
            rule,
            iterate,
            u_mode,
        } => {
            // A short H_o (k_too_large set) still seeds a run, proposing a
            // smaller k; the state carries the signal for reporting.
            let s = successive_elimination(m, k, *rule, measure, *iterate, *u_mode, rng_seed)?;
            Ok((StartOutcome::Centroids(s.chosen.clone()), Some(s)))
        }
        StartSpec::Primary => {
            let s = match measure {
                MeasureKind::MinMax => primary_minmax(m, order, k)?,
                MeasureKind::MinSum => primary_minsum(m, order, k)?,
            };
            Ok((StartOutcome::Clusters(s), None))
        }
        StartSpec::Adaptive {
            lambda,
            global_min_size,
            max_size_rule,
            allow_absorb,
        } => {
            let opts = AdaptiveOptions {
                lambda: *lambda,
                global_min_size: *global_min_size,
                max_size_rule: *max_size_rule,
                allow_absorb: *allow_absorb,
            };
            let s = match measure {
                MeasureKind::MinMax => adaptive_minmax(m, order, k, &opts)?,
                MeasureKind::MinSum => adaptive_minsum(m, order, k, &opts)?,
            };
            Ok((StartOutcome::Clusters(s), None))
        }
        StartSpec::Refinement {
            approach,
            interrupt_at,
        } => {
            let s = cluster_size_refinement(m, order, k, *approach, measure, *interrupt_at)?;
            Ok((StartOutcome::Clusters(s), None))
        }
        StartSpec::Explicit { centroids } => {
            if centroids.len() != k {
                return Err(Error::BadK {
                    k: centroids.len(),
                    n,
                });
            }
            Ok((StartOutcome::Centroids(centroids.clone()), None))
        }
    }
}
