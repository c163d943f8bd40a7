use rayon::prelude::*;

use super::operators::{
    adapt_scale_factor_with, crossover_with, individual_stream, initialize_population, mutate_with,
    pick_distinct, select, stream_rng, ScaleDraws, TrialContext,
};
use super::{
    ConvergenceHistory, DeConfig, Fitness, GenerationRecord, Individual, Population, WbfFitness,
};
use crate::dataset::{validate_dataset, Dataset, ModelRun};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::wbf::WbfConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct DeOutcome<T> {
    /// Fittest individual seen during the run.
    pub best: Individual<T>,
    pub history: ConvergenceHistory<T>,
    pub final_population: Population<T>,
}

/// Random decisions for one individual in one generation, drawn up front.
struct Plan<T> {
    donors: [usize; 3],
    k: T,
    draws: ScaleDraws<T>,
    local_budget: usize,
}

struct Offspring<T> {
    trial: Individual<T>,
    target_fitness: T,
    evaluations: usize,
}

/// Trial built from fixed donors and crossover coefficient, varying only the scale factor.
struct TrialBuilder<'a, T, F> {
    target: &'a [T],
    donors: [&'a [T]; 3],
    k: T,
    fitness: &'a F,
    budget: usize,
    evaluated: Vec<(T, T)>,
}

impl<T: Scalar, F: Fitness<T>> TrialBuilder<'_, T, F> {
    fn weights(&self, f: T) -> Vec<T> {
        let v = mutate_with(self.donors[0], self.donors[1], self.donors[2], f);
        crossover_with(self.target, &v, self.k)
    }

    fn cached(&self, f: T) -> Option<T> {
        self.evaluated
            .iter()
            .find(|(s, _)| *s == f)
            .map(|(_, v)| *v)
    }
}

impl<T: Scalar, F: Fitness<T>> TrialContext<T> for TrialBuilder<'_, T, F> {
    fn budget(&self) -> usize {
        self.budget
    }

    fn trial_fitness(&mut self, f: T) -> T {
        let v = self.fitness.evaluate(&self.weights(f));
        self.evaluated.push((f, v));
        v
    }
}

fn record<T: Scalar>(
    pop: &Population<T>,
    best: &Individual<T>,
    evaluations: usize,
) -> GenerationRecord<T> {
    let fs: Vec<T> = pop.individuals.iter().map(|i| i.scale_factor).collect();
    let f_min = fs.iter().copied().fold(T::infinity(), T::min);
    let f_max = fs.iter().copied().fold(T::neg_infinity(), T::max);
    GenerationRecord {
        generation: pop.generation,
        best_fitness: best.fitness_or_zero(),
        mean_fitness: pop.mean_fitness(),
        best_weights: best.weights.clone(),
        scale_factor_min: f_min,
        scale_factor_mean: fs.iter().copied().sum::<T>() / T::from_count(fs.len()),
        scale_factor_max: f_max,
        evaluations,
    }
}

/// Splits the per-generation local-search budget over the requesting
/// individuals in index order.
fn allocate_budget<T: Scalar>(plans: &mut [Plan<T>], cfg: &DeConfig<T>) {
    let requesters: Vec<usize> = (0..plans.len())
        .filter(|&i| plans[i].draws.wants_local_search(cfg))
        .collect();
    if requesters.is_empty() {
        return;
    }
    let share = cfg.local_search_budget / requesters.len();
    let extra = cfg.local_search_budget % requesters.len();
    for (n, &i) in requesters.iter().enumerate() {
        plans[i].local_budget = share + usize::from(n < extra);
    }
}

fn breed<T: Scalar, F: Fitness<T>>(
    pop: &Population<T>,
    index: usize,
    plan: &Plan<T>,
    cfg: &DeConfig<T>,
    fitness: &F,
) -> Offspring<T> {
    let target = &pop.individuals[index];
    let w = |i: usize| pop.individuals[i].weights.as_slice();
    let mut builder = TrialBuilder {
        target: &target.weights,
        donors: [w(plan.donors[0]), w(plan.donors[1]), w(plan.donors[2])],
        k: plan.k,
        fitness,
        budget: plan.local_budget,
        evaluated: Vec::new(),
    };
    let (f, _) = adapt_scale_factor_with(target.scale_factor, plan.draws, cfg, &mut builder);
    let mut evaluations = builder.evaluated.len();
    let weights = builder.weights(f);
    let trial_fitness = builder.cached(f).unwrap_or_else(|| {
        evaluations += 1;
        fitness.evaluate(&weights)
    });
    let target_fitness = match target.fitness {
        Some(v) if !cfg.reevaluate_targets => v,
        _ => {
            evaluations += 1;
            fitness.evaluate(&target.weights)
        }
    };
    Offspring {
        trial: Individual {
            weights,
            scale_factor: f,
            fitness: Some(trial_fitness),
        },
        target_fitness,
        evaluations,
    }
}

fn map_indices<R: Send, G>(pool: Option<&rayon::ThreadPool>, n: usize, f: G) -> Vec<R>
where
    G: Fn(usize) -> R + Sync + Send,
{
    match pool {
        Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        None => (0..n).map(f).collect(),
    }
}

/// Runs the optimizer against any objective over `num_models` weights.
///
/// The history holds one record for the initial population and one per generation.
pub fn run_de<T: Scalar, F: Fitness<T>>(
    cfg: &DeConfig<T>,
    num_models: usize,
    fitness: &F,
) -> Result<DeOutcome<T>> {
    if num_models == 0 {
        return Err(Error::NoModels);
    }
    let mut pop = initialize_population(cfg, num_models)?;
    let pool = match cfg.workers {
        1 => None,
        n => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
        ),
    };
    let pool = pool.as_ref();
    let np = pop.len();

    let initial: Vec<T> = map_indices(pool, np, |i| fitness.evaluate(&pop.individuals[i].weights));
    for (ind, f) in pop.individuals.iter_mut().zip(initial) {
        ind.fitness = Some(f);
    }
    let mut best = pop.individuals[pop.best_index().expect("population is evaluated")].clone();
    let mut history = ConvergenceHistory::default();
    history.records.push(record(&pop, &best, np));

    for g in 0..cfg.generations {
        let mut plans: Vec<Plan<T>> = (0..np)
            .map(|i| {
                let mut rng = stream_rng(cfg.seed, individual_stream(g, i));
                let donors = pick_distinct(&mut rng, np, i);
                let k = T::lit(rand::Rng::random::<f64>(&mut rng));
                let draws = ScaleDraws::draw(&mut rng);
                Plan {
                    donors,
                    k,
                    draws,
                    local_budget: 0,
                }
            })
            .collect();
        allocate_budget(&mut plans, cfg);

        let offspring: Vec<Offspring<T>> =
            map_indices(pool, np, |i| breed(&pop, i, &plans[i], cfg, fitness));

        let mut evaluations = 0;
        let next: Vec<Individual<T>> = pop
            .individuals
            .iter()
            .zip(offspring)
            .map(|(target, off)| {
                evaluations += off.evaluations;
                let mut target = target.clone();
                target.fitness = Some(off.target_fitness);
                select(target, off.trial)
            })
            .collect();
        pop = Population {
            individuals: next,
            generation: g + 1,
        };
        for ind in &pop.individuals {
            if ind.fitness_or_zero() > best.fitness_or_zero() {
                best = ind.clone();
            }
        }
        history.records.push(record(&pop, &best, evaluations));
    }

    Ok(DeOutcome {
        best,
        history,
        final_population: pop,
    })
}

/// Optimizes fusion weights for `runs` on the validation split `val`.
///
/// Inputs are validated (restricted to the validation images) before the first
/// generation.
pub fn run_deihdl<T: Scalar>(
    cfg: &DeConfig<T>,
    val: &Dataset<T>,
    runs: &[ModelRun<T>],
    wbf_cfg: &WbfConfig<T>,
) -> Result<(Individual<T>, ConvergenceHistory<T>)> {
    cfg.validate()?;
    if val.images.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let restricted: Vec<ModelRun<T>> = runs.iter().map(|r| r.restricted_to(&val.images)).collect();
    let report = validate_dataset(val, &restricted);
    if !report.is_clean() {
        return Err(Error::Validation(report));
    }
    let fitness = WbfFitness::new(val, &restricted, *wbf_cfg, cfg.fitness_metric)?;
    let out = run_de(cfg, restricted.len(), &fitness)?;
    Ok((out.best, out.history))
}
