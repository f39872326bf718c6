//! Coordinate-free clustering around pseudo-centroids.
//!
//! A pseudo-centroid is a cluster member minimizing a separation measure
//! over its cluster, so clustering needs nothing but a pairwise distance
//! table: no coordinates, no metric assumptions, negative "attraction"
//! distances allowed. Two measures are built in, giving the K-MinMax and
//! K-MinSum algorithms, both shaped like K-Means: recompute centroids,
//! reassign points, repeat.
//!
//! Beyond the core iteration the crate provides the full catalog of
//! starting methods (greedy max-min diversity with several refinements,
//! and intensity-based constructions whose per-step clusters are provably
//! best-of-size), a regret-threshold iteration variant, diversified and
//! stochastic restarts, and the Value measure for comparing clusterings
//! across k. Exhaustive oracles certify the intensity constructions on
//! random instances.
//!
//! ```
//! use pcclust::{DistanceMatrix, EngineConfig, Metric, SeparationMeasure, Start};
//!
//! let m = DistanceMatrix::from_points(
//!     &[vec![0.0], vec![1.0], vec![3.0], vec![7.0]],
//!     Metric::Euclidean,
//! )
//! .unwrap();
//! let cfg = EngineConfig::new(SeparationMeasure::min_max());
//! let report = pcclust::run_kpc(Start::Centroids(vec![0, 3]), &cfg, &m).unwrap();
//! assert_eq!(report.final_clustering.k(), 2);
//! ```

pub mod diversity;
pub mod engine;
mod error;
pub mod intensity;
pub mod io;
pub mod matrix;
pub mod measure;
pub mod oracle;
pub mod order;
pub mod regret;
pub mod start;

pub use engine::{
    assign_points, kpc_iterate, recompute_centroids, run_kpc, span_objective, Cluster,
    Clustering, EngineConfig, Objective, RunReport, Start, Termination, TerminationCause,
};
pub use error::{Error, Result};
pub use matrix::{DistanceMatrix, Metric, DEFAULT_SYM_TOL};
pub use measure::{pseudo_centroid, separate, CentroidResult, MeasureKind, SeparationMeasure};
pub use order::NeighborOrder;
pub use regret::{quality, run_regret_threshold, Accent, CentroidConvention, FSchedule};
pub use start::{resolve_start, SeedPoint, StartOutcome, StartSpec};
