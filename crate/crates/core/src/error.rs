use thiserror::Error;

use crate::dataset::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("confidence {0} is outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("got detections from {models} models but {weights} weights")]
    LengthMismatch { models: usize, weights: usize },
    #[error("at least one model weight must be positive")]
    AllZeroWeights,
    #[error("model weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("fusion needs at least one model")]
    NoModels,
    #[error("cluster has no members")]
    EmptyCluster,
    #[error("every member of the cluster has a zero effective score")]
    ZeroScoreCluster,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("population size {0} is below the minimum of 4")]
    PopulationTooSmall(usize),
    #[error("validation split has no images")]
    EmptyValidation,
    #[error("input validation failed:\n{0}")]
    Validation(ValidationReport),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
