//! Mahalanobis metric learning by LogDet Bregman projections over pair
//! constraints that are rebuilt every training cycle from each sample's
//! nearest same-class and other-class neighbors.
//!
//! ```
//! use dynmetric::{cross_validate, generate_synthetic, SolverConfig, SyntheticSpec};
//!
//! let ds = generate_synthetic(&SyntheticSpec {
//!     classes: 3,
//!     per_class: 6,
//!     dim: 4,
//!     informative_dim: 2,
//!     separation: 4.0,
//!     noise_scale: 1.0,
//!     seed: 1,
//! })
//! .unwrap();
//! let report = cross_validate(&ds, &SolverConfig::default(), &[1, 3], 3, 7, true).unwrap();
//! print!("{}", report.table());
//! ```

pub mod classifier;
pub mod constraints;
pub mod dataset;
pub mod error;
pub mod metric;
pub mod solver;

pub use classifier::{cross_validate, evaluate, knn_predict, EvaluationReport, KAccuracy};
pub use constraints::{build_pairset, nearest_neighbors, Neighbors, Pair, PairSet, Relation};
pub use dataset::{
    generate_synthetic, load_csv, load_queries, standardize, stratified_kfold, Dataset, Fold,
    LabelColumn, Sample, ScalingParams, SyntheticSpec,
};
pub use error::{Error, Result};
pub use metric::{
    distance, is_psd, load_metric, logdet_divergence, rank_one_update, save_metric,
    MahalanobisMetric, MetricFile,
};
pub use solver::{
    bregman_step, compute_thresholds, compute_thresholds_under, inner_solve, train, train_with,
    Convergence, CycleEvent, CycleRecord, Projection, SolverConfig, SolverState, Thresholds,
    TrainingLog,
};
