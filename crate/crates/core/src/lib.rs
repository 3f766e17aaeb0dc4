//! Full-reference point cloud quality assessment by transformational
//! complexity.
//!
//! A distorted cloud is scored by how hard it is to predict the reference from
//! it, relative to predicting the reference from itself. The pipeline splits
//! space into Voronoi cells around farthest-point seeds, fits space-aware
//! vector autoregressions inside every cell, turns the residual-covariance
//! determinants and the prediction terms into local similarities, and fuses
//! them into one score. The [`evaluation`] module correlates scores with
//! subjective ratings.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod metric;
pub mod pointcloud;
pub mod rng;
pub mod savar;
pub mod segmentation;
pub mod spatial;
pub mod synthetic;

pub use error::{Error, Result};
pub use evaluation::{run_benchmark, BenchmarkRun, CorrelationSummary, LogisticParams, ScoredRecord};
pub use features::{ColorWeights, PatchFeatures};
pub use metric::{score, score_if_color, ColorSpace, MetricConfig, PreparedReference, QualityReport};
pub use pointcloud::{
    degrade, load_ply, save_ply, DegradationKind, DegradationSpec, PlyEncoding, Point, PointCloud, Vec3,
};
pub use savar::{EtaMode, WeightScheme};
pub use segmentation::SamplingStrategy;
