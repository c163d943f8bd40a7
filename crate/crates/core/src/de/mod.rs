//! Differential-evolution search over per-model fusion weights.
//!
//! Each individual is a weight vector in `[0, 1]^N` with its own scale factor.
//! Every generation builds a DE/rand/1 mutant per individual, adapts the scale
//! factor with the self-adaptive local-search rule, blends target and mutant by
//! arithmetic crossover and keeps the trial only when it is strictly fitter.

mod engine;
mod fitness;
mod operators;

pub use engine::{run_de, run_deihdl, DeOutcome};
pub use fitness::{evaluate_fitness, Fitness, WbfFitness};
pub use operators::{
    adapt_scale_factor, adapt_scale_factor_with, crossover, crossover_with, golden_section_scale,
    hill_climb_scale, initialize_population, mutate, mutate_with, pick_distinct, select,
    stream_rng, NoLocalSearch, ScaleBranch, ScaleDraws, TrialContext, INIT_STREAM,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMetric {
    Map50,
    #[default]
    Map50_95,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig<T> {
    /// NP
    pub population_size: usize,
    /// G
    pub generations: usize,
    pub tau1: T,
    pub tau2: T,
    pub tau3: T,
    pub f_lo: T,
    pub f_hi: T,
    /// Step of the random scale-factor perturbation.
    pub f_a: T,
    /// Fitness evaluations per generation available to the scale-factor local searches.
    pub local_search_budget: usize,
    pub fitness_metric: FitnessMetric,
    pub seed: u64,
    /// Re-evaluate every target each generation instead of reusing its cached fitness.
    pub reevaluate_targets: bool,
    /// Replace the first individuals with one-hot weight vectors.
    pub one_hot_seeding: bool,
    /// Threads used for fitness evaluation; 0 lets rayon decide. Results do not depend on it.
    pub workers: usize,
}

impl<T: Scalar> Default for DeConfig<T> {
    fn default() -> Self {
        Self {
            population_size: 10,
            generations: 40,
            tau1: T::lit(0.1),
            tau2: T::lit(0.03),
            tau3: T::lit(0.07),
            f_lo: T::lit(0.1),
            f_hi: T::one(),
            f_a: T::lit(0.1),
            local_search_budget: 0,
            fitness_metric: FitnessMetric::Map50_95,
            seed: 0,
            reevaluate_targets: false,
            one_hot_seeding: false,
            workers: 1,
        }
    }
}

impl<T: Scalar> DeConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::PopulationTooSmall(self.population_size));
        }
        let unit = |name: &str, v: T| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} = {v} must lie in [0, 1]"
                )))
            }
        };
        unit("tau1", self.tau1)?;
        unit("tau2", self.tau2)?;
        unit("tau3", self.tau3)?;
        if self.tau2 >= self.tau3 {
            return Err(Error::InvalidConfig(format!(
                "tau2 ({}) must be below tau3 ({})",
                self.tau2, self.tau3
            )));
        }
        if !(self.f_lo.is_finite() && self.f_hi.is_finite() && self.f_lo <= self.f_hi) {
            return Err(Error::InvalidConfig(format!(
                "scale-factor bounds [{}, {}] are invalid",
                self.f_lo, self.f_hi
            )));
        }
        if !(self.f_a.is_finite() && self.f_a >= T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "f_a = {} must be >= 0",
                self.f_a
            )));
        }
        Ok(())
    }

    pub fn initial_scale_factor(&self) -> T {
        (self.f_lo + self.f_hi) / T::lit(2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual<T> {
    pub weights: Vec<T>,
    pub scale_factor: T,
    /// `None` until evaluated.
    pub fitness: Option<T>,
}

impl<T: Scalar> Individual<T> {
    pub fn new(weights: Vec<T>, scale_factor: T) -> Self {
        Self {
            weights,
            scale_factor,
            fitness: None,
        }
    }

    pub fn fitness_or_zero(&self) -> T {
        self.fitness.unwrap_or_else(T::zero)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population<T> {
    pub individuals: Vec<Individual<T>>,
    pub generation: usize,
}

impl<T: Scalar> Population<T> {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    /// Index of the fittest evaluated individual; lowest index on ties.
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for (i, ind) in self.individuals.iter().enumerate() {
            if let Some(f) = ind.fitness {
                if best.is_none_or(|(_, bf)| f > bf) {
                    best = Some((i, f));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn mean_fitness(&self) -> T {
        if self.individuals.is_empty() {
            return T::zero();
        }
        self.individuals
            .iter()
            .map(Individual::fitness_or_zero)
            .sum::<T>()
            / T::from_count(self.individuals.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord<T> {
    pub generation: usize,
    /// Best fitness seen so far in the run.
    pub best_fitness: T,
    pub mean_fitness: T,
    pub best_weights: Vec<T>,
    pub scale_factor_min: T,
    pub scale_factor_mean: T,
    pub scale_factor_max: T,
    /// Fitness evaluations spent in this generation.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceHistory<T> {
    pub records: Vec<GenerationRecord<T>>,
}

impl<T: Scalar> ConvergenceHistory<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_evaluations(&self) -> usize {
        self.records.iter().map(|r| r.evaluations).sum()
    }

    /// Rows of `generation,best_fitness,mean_fitness,w_1,...,w_N`.
    pub fn to_csv(&self) -> String {
        let n = self.records.first().map_or(0, |r| r.best_weights.len());
        let mut out = String::from("generation,best_fitness,mean_fitness");
        for k in 1..=n {
            out.push_str(&format!(",w_{k}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.12},{:.12}",
                r.generation,
                r.best_fitness.as_f64(),
                r.mean_fitness.as_f64()
            ));
            for w in &r.best_weights {
                out.push_str(&format!(",{:.12}", w.as_f64()));
            }
            out.push('\n');
        }
        out
    }
}
