//! Ensemble fusion of object-detector outputs.
//!
//! - [`geometry`]: corner-form boxes, area and IoU.
//! - [`dataset`]: detections, ground truth, per-model runs and input validation.
//! - [`wbf`]: weighted boxes fusion across models.
//! - [`metrics`]: TP/FP matching, PR curves, AP, mAP50 and mAP50-95.
//! - [`de`]: differential evolution over per-model fusion weights with mAP as fitness.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`). The crate
//! root exposes `f64` aliases; [`single`] holds the `f32` ones.

pub mod dataset;
pub mod de;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod scalar;
pub mod wbf;

pub use dataset::{
    validate_dataset, CategoryId, FindingKind, ImageId, ScoredBox, Split, ValidationReport,
};
pub use de::{run_de, run_deihdl, FitnessMetric};
pub use error::{Error, Result};
pub use geometry::{box_area, iou};
pub use metrics::{average_precision, evaluate, match_detections, ApScheme, MatchOutcome};
pub use scalar::Scalar;
pub use wbf::{fuse_runs, weighted_boxes_fusion, ConfidenceRescale};

pub type BoundingBox = geometry::BoundingBox<f64>;
pub type Detection = dataset::Detection<f64>;
pub type GroundTruthBox = dataset::GroundTruthBox<f64>;
pub type ModelRun = dataset::ModelRun<f64>;
pub type Dataset = dataset::Dataset<f64>;
pub type WbfConfig = wbf::WbfConfig<f64>;
pub type FusedBox = wbf::FusedBox<f64>;
pub type WeightedBox = wbf::WeightedBox<f64>;
pub type EvalConfig = metrics::EvalConfig<f64>;
pub type EvalReport = metrics::EvalReport<f64>;
pub type PrCurve = metrics::PrCurve<f64>;
pub type DeConfig = de::DeConfig<f64>;
pub type Individual = de::Individual<f64>;
pub type Population = de::Population<f64>;
pub type ConvergenceHistory = de::ConvergenceHistory<f64>;

/// Single-precision aliases.
pub mod single {
    use super::{dataset, de, geometry, metrics, wbf};

    pub type BoundingBox = geometry::BoundingBox<f32>;
    pub type Detection = dataset::Detection<f32>;
    pub type GroundTruthBox = dataset::GroundTruthBox<f32>;
    pub type ModelRun = dataset::ModelRun<f32>;
    pub type Dataset = dataset::Dataset<f32>;
    pub type WbfConfig = wbf::WbfConfig<f32>;
    pub type FusedBox = wbf::FusedBox<f32>;
    pub type EvalConfig = metrics::EvalConfig<f32>;
    pub type EvalReport = metrics::EvalReport<f32>;
    pub type DeConfig = de::DeConfig<f32>;
    pub type Individual = de::Individual<f32>;
}
