use crate::dataset::{Dataset, ModelRun};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalConfig};
use crate::scalar::Scalar;
use crate::wbf::{fuse_runs, WbfConfig};

use super::FitnessMetric;

/// Objective maximised by the optimizer.
pub trait Fitness<T>: Sync {
    fn evaluate(&self, weights: &[T]) -> T;
}

impl<T, F> Fitness<T> for F
where
    F: Fn(&[T]) -> T + Sync,
{
    fn evaluate(&self, weights: &[T]) -> T {
        self(weights)
    }
}

/// mAP of the weighted-boxes-fusion ensemble on a validation split.
pub struct WbfFitness<'a, T> {
    val: &'a Dataset<T>,
    runs: &'a [ModelRun<T>],
    wbf: WbfConfig<T>,
    eval: EvalConfig<T>,
    metric: FitnessMetric,
}

impl<'a, T: Scalar> WbfFitness<'a, T> {
    pub fn new(
        val: &'a Dataset<T>,
        runs: &'a [ModelRun<T>],
        wbf: WbfConfig<T>,
        metric: FitnessMetric,
    ) -> Result<Self> {
        wbf.validate()?;
        if runs.is_empty() {
            return Err(Error::NoModels);
        }
        let eval = match metric {
            FitnessMetric::Map50 => EvalConfig::single_threshold(T::lit(0.5)),
            FitnessMetric::Map50_95 => EvalConfig::default(),
        };
        Ok(Self {
            val,
            runs,
            wbf,
            eval,
            metric,
        })
    }

    pub fn num_models(&self) -> usize {
        self.runs.len()
    }

    /// Fitness of `weights`; an all-zero vector scores 0 without fusing.
    pub fn score(&self, weights: &[T]) -> Result<T> {
        if weights.len() != self.runs.len() {
            return Err(Error::LengthMismatch {
                models: self.runs.len(),
                weights: weights.len(),
            });
        }
        if weights.iter().all(|w| *w == T::zero()) {
            return Ok(T::zero());
        }
        let fused = fuse_runs(self.runs, &self.val.images, weights, &self.wbf)?;
        let report = evaluate(&fused, self.val, &self.eval)?;
        Ok(match self.metric {
            FitnessMetric::Map50 => report.map50,
            FitnessMetric::Map50_95 => report.map50_95,
        })
    }
}

impl<T: Scalar> Fitness<T> for WbfFitness<'_, T> {
    fn evaluate(&self, weights: &[T]) -> T {
        // Weights produced by the optimizer are finite and in [0, 1]; anything
        // rejected by fusion carries no usable signal.
        self.score(weights).unwrap_or_else(|_| T::zero())
    }
}

/// One-off fitness evaluation of a weight vector.
pub fn evaluate_fitness<T: Scalar>(
    weights: &[T],
    val: &Dataset<T>,
    runs: &[ModelRun<T>],
    wbf_cfg: &WbfConfig<T>,
    metric: FitnessMetric,
) -> Result<T> {
    WbfFitness::new(val, runs, *wbf_cfg, metric)?.score(weights)
}
