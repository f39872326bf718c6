use thiserror::Error;

/// Errors surfaced by the clustering primitives.
#[derive(Debug, Error)]
pub enum Error {
    #[error("distance table is not square: row {row} has {got} entries, expected {expected}")]
    NonSquare {
        row: usize,
        got: usize,
        expected: usize,
    },

    #[error("diagonal entry ({0},{0}) must be exactly zero")]
    NonZeroDiagonal(usize),

    #[error("entry ({i},{j}) is not finite")]
    NonFiniteEntry { i: usize, j: usize },

    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },

    #[error("no points provided")]
    EmptyInput,

    #[error("weight exponent must be non-negative, got {0}")]
    NegativeWeightExponent(f64),

    #[error("entry ({i},{j}) is negative; weighting requires non-negative distances")]
    NegativeEntryWithWeighting { i: usize, j: usize },

    #[error("point {0} is not a member of the cluster")]
    PointNotInCluster(usize),

    #[error("cluster has no members")]
    EmptyCluster,

    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("point index {index} is out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("k = {k} is out of range for n = {n}")]
    BadK { k: usize, n: usize },

    #[error("k_check = {k_check} must lie in [2, k-1] for k = {k}")]
    BadKCheck { k_check: usize, k: usize },

    #[error("no centroids given")]
    NoCentroids,

    #[error("duplicate centroid {0}")]
    DuplicateCentroid(usize),

    #[error("match point {0} was dropped from the cluster; full recomputation required")]
    MatchPointDropped(usize),

    #[error("inconsistent C0/C+/C- sets for the incremental SumDist update")]
    InconsistentSets,

    #[error("fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),

    #[error("quality measures need at least 2 clusters")]
    SingleCluster,

    #[error("subset enumeration too large: C({n}, {v}) exceeds {limit}")]
    CombinatorialBlowup { n: usize, v: usize, limit: u64 },

    #[error("infeasible size bounds at k_o = {k_o}: max_size {max_size} < min_size {min_size}")]
    InfeasibleBounds {
        k_o: usize,
        min_size: usize,
        max_size: usize,
    },

    #[error("lambda must lie in [0, 1], got {0}")]
    BadLambda(f64),

    #[error("global_min_size must be at least 2, got {0}")]
    BadGlobalMinSize(usize),

    #[error("max_iterations must be at least 1")]
    BadIterationLimit,

    #[error("target distance must be finite, got {0}")]
    NonFiniteTarget(f64),

    #[error("slack must be non-negative, got {0}")]
    NegativeSlack(f64),

    #[error("start construction is incomplete: {remaining} points unassigned")]
    IncompleteStart { remaining: usize },

    #[error("max_select must be at least 1")]
    BadMaxSelect,
}

pub type Result<T> = std::result::Result<T, Error>;
